#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "aoi/env.hpp"
#include "aoi/policy.hpp"
#include "aoi/solve.hpp"
#include "aoi/state_space.hpp"
#include "aoi/types.hpp"

// The scheduler-under-test abstraction the simulation harness drives.
// Fixed policies ignore feedback; learners rebuild their model from it.

namespace aoi {

// Everything an agent may learn from one slot.  `t` is the 0-based slot
// index; `state` is the state the slot started in, `next` the successor.
// `delivered` is only meaningful when the action transmitted.
struct StepFeedback {
    std::uint64_t t = 0;
    SystemState state;
    Action action;
    SystemState next;
    double age_cost = 0.0;
    int tx_cost = 0;
    bool delivered = false;
};

class Agent {
public:
    virtual ~Agent() = default;
    virtual std::string name() const = 0;

    // Returns the agent to its initial state; called once before every
    // rollout.  `seed` feeds any internal randomness.
    virtual void reset(std::uint64_t seed) { (void)seed; }

    virtual Action act(const SystemState& s, std::uint64_t t) = 0;
    virtual void observe(const StepFeedback& fb) { (void)fb; }

    // Learners stream one line per slot here when attached (see learn
    // header for the format); fixed policies ignore it.
    virtual void set_trace(std::ostream* out) { (void)out; }
};

class IdleAgent : public Agent {
public:
    std::string name() const override { return "idle"; }
    Action act(const SystemState&, std::uint64_t) override { return Action::idle(); }
};

// Plays a solved deterministic table; ages beyond the planning cap are
// clamped for lookup while the rollout itself stays uncapped.
class TablePolicyAgent : public Agent {
public:
    TablePolicyAgent(std::string name, const EnvConfig& cfg, DeterministicPolicy policy)
        : name_(std::move(name)), space_(cfg), users_(cfg.users()), policy_(std::move(policy)) {
        if (policy_.action.size() != space_.size())
            throw ValidationError("table policy has wrong dimension for this config");
    }

    std::string name() const override { return name_; }
    Action act(const SystemState& s, std::uint64_t) override {
        return policy_.at(space_.digest(s), users_);
    }

private:
    std::string name_;
    StateSpace space_;
    int users_;
    DeterministicPolicy policy_;
};

// Per-slot randomization between the two tables of a MixturePolicy; the
// coin stream is seeded at reset and independent of the channel stream.
class MixtureAgent : public Agent {
public:
    MixtureAgent(std::string name, const EnvConfig& cfg, MixturePolicy policy)
        : name_(std::move(name)), space_(cfg), users_(cfg.users()), policy_(std::move(policy)) {
        if (policy_.low.action.size() != space_.size() ||
            policy_.high.action.size() != space_.size())
            throw ValidationError("mixture tables have wrong dimension for this config");
    }

    std::string name() const override { return name_; }
    void reset(std::uint64_t seed) override { coin_ = Rng(seed); }
    Action act(const SystemState& s, std::uint64_t) override {
        const std::size_t idx = space_.digest(s);
        const DeterministicPolicy& table =
            coin_.bernoulli(policy_.mu) ? policy_.low : policy_.high;
        return table.at(idx, users_);
    }

private:
    std::string name_;
    StateSpace space_;
    int users_;
    MixturePolicy policy_;
    Rng coin_{0};
};

// Index policy with known error probabilities (taken from the config's
// fresh-transmission error rates).
class WhittleAgent : public Agent {
public:
    WhittleAgent(const EnvConfig& cfg, double eta = 0.0) {
        if (cfg.protocol != Protocol::Arq)
            throw ValidationError("whittle baseline: stated for the ARQ protocol only");
        ctx_.eta = eta;
        for (int j = 0; j < cfg.users(); ++j) {
            ctx_.error_probs.push_back(cfg.error_prob(j, 0));
            ctx_.weights.push_back(cfg.weight(j));
        }
    }

    std::string name() const override { return "whittle"; }
    Action act(const SystemState& s, std::uint64_t) override { return whittle_action(s, ctx_); }

private:
    WhittleContext ctx_;
};

class GreedyAgent : public Agent {
public:
    explicit GreedyAgent(const EnvConfig& cfg) {
        if (cfg.protocol != Protocol::Arq)
            throw ValidationError("greedy baseline: stated for the ARQ protocol only");
        for (int j = 0; j < cfg.users(); ++j) weights_.push_back(cfg.weight(j));
    }

    std::string name() const override { return "greedy"; }
    Action act(const SystemState& s, std::uint64_t) override { return greedy_action(s, weights_); }

private:
    std::vector<double> weights_;
};

class RoundRobinAgent : public Agent {
public:
    explicit RoundRobinAgent(const EnvConfig& cfg) : users_(cfg.users()) {
        if (cfg.protocol != Protocol::Arq)
            throw ValidationError("round-robin baseline: stated for the ARQ protocol only");
    }

    std::string name() const override { return "round-robin"; }
    Action act(const SystemState&, std::uint64_t t) override {
        return round_robin_action(t, users_);
    }

private:
    int users_;
};

}  // namespace aoi
