#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "aoi/agents.hpp"
#include "aoi/env.hpp"
#include "aoi/policy.hpp"
#include "aoi/rng.hpp"
#include "aoi/solve.hpp"
#include "aoi/state_space.hpp"
#include "aoi/types.hpp"

// Online learners that discover the error probabilities from ACK/NACK
// feedback: optimistic episodic learning (count-doubling episodes, lower
// confidence bounds on error rates, a planner per episode) and a
// differential SARSA baseline.
//
// When a trace stream is attached, every slot appends one line
//   t,digest,action,feedback,cost,eta
// with t 1-based, feedback in {-1: idle, 0: NACK, 1: ACK}, and cost the
// instantaneous Lagrangian cost (weighted age + eta if transmitting).

namespace aoi {

struct LearnerConfig {
    double confidence = 0.05;  // failure probability of the confidence bounds
    double alpha = 100.0;      // dual (price) update step
    double U = 1.0;            // confidence-radius scale
    std::uint64_t horizon = 100000;  // T: known run length (exploration annealing)
    enum class Planner { Vi, Whittle } planner = Planner::Vi;
    // An episode plan only needs a near-greedy policy, not solver-grade
    // residuals; 1e-4 spans cut replanning cost several-fold.
    double planner_tol = 1e-4;
    // Soft per-episode sweep budget.  Early price spikes push the optimistic
    // model into long deterministic idle cycles whose spans contract like
    // 1 - O(1/period^2); chasing the tolerance there buys nothing, so the
    // planner keeps the budget-capped iterate and moves on.
    std::int64_t planner_max_sweeps = 600;
    // Optimistic models keep error rates at their lower confidence bound, so
    // early-episode chains are deterministic and periodic; plain value
    // iteration cycles on them.  Half-step relaxation kills those cycles.
    double planner_relaxation = 0.5;
    std::size_t state_ceiling = 1'000'000;
    // Differential-SARSA constants (surfaced because no source pins them).
    double sarsa_eps0 = 0.2;
    double sarsa_eps1 = 0.01;
    double sarsa_beta0 = 0.1;
    double sarsa_beta_pivot = 1000.0;  // beta = beta0 * pivot / (pivot + visits)
    double sarsa_rho_step = 0.01;

    void validate() const {
        if (!(confidence > 0.0 && confidence < 1.0))
            throw ValidationError("learner: confidence must lie in (0, 1)");
        if (!(alpha > 0.0)) throw ValidationError("learner: alpha must be positive");
        if (!(U > 0.0)) throw ValidationError("learner: U must be positive");
        if (horizon < 1) throw ValidationError("learner: horizon must be >= 1");
    }
};

// log(S * A * t / confidence) assembled additively so that astronomically
// large truncated state counts (|S| = (delta_max*(r_max+1))^M) cannot
// overflow, with |A| = 2M + 1.
inline double confidence_log_term(const EnvConfig& cfg, std::uint64_t t, double confidence) {
    const int levels = cfg.protocol == Protocol::Harq ? cfg.r_max + 1 : 1;
    const double log_s =
        static_cast<double>(cfg.users()) *
        std::log(static_cast<double>(cfg.delta_max) * static_cast<double>(levels));
    const double log_a = std::log(static_cast<double>(action_count(cfg.users())));
    return log_s + log_a + std::log(static_cast<double>(t)) - std::log(confidence);
}

// Lower confidence bound on an error probability:
//   max{0, E/max(N,1) − sqrt(U * log_term / max(1, N))}.
// With no data the radius dominates and the estimate is 0 (fully
// optimistic).
inline double optimistic_error_rate(std::uint64_t failures, std::uint64_t attempts,
                                    double log_term, double U) {
    const double n = static_cast<double>(std::max<std::uint64_t>(1, attempts));
    const double p_hat = static_cast<double>(failures) / n;
    const double radius = std::sqrt(U * log_term / n);
    return std::max(0.0, p_hat - radius);
}

// ---------------------------------------------------------------------------
// Optimistic episodic learner (both protocols, VI or index planner).

class UcrlAgent : public Agent {
public:
    struct EpisodeRecord {
        std::uint64_t t_start = 1;         // 1-based slot the episode begins at
        double eta = 0.0;
        std::vector<double> optimistic;    // per parameter, at episode start
        std::vector<std::uint64_t> start_counts;  // N at episode start
        std::vector<std::uint64_t> end_local;     // v when the episode closed
        enum class End { Count, TimeCap, Open } end = End::Open;
    };

    UcrlAgent(const EnvConfig& cfg, const LearnerConfig& lc)
        : cfg_(cfg), lc_(lc), users_(cfg.users()),
          levels_(cfg.protocol == Protocol::Harq ? cfg.r_max + 1 : 1) {
        cfg_.validate();
        lc_.validate();
        if (lc_.planner == LearnerConfig::Planner::Whittle && cfg_.protocol != Protocol::Arq)
            throw ValidationError("index planner requires the ARQ protocol");
        if (lc_.planner == LearnerConfig::Planner::Vi)
            space_.emplace(cfg_, lc_.state_ceiling);
        wctx_.weights.resize(static_cast<std::size_t>(users_));
        for (int j = 0; j < users_; ++j)
            wctx_.weights[static_cast<std::size_t>(j)] = cfg_.weight(j);
        reset(0);
    }

    std::string name() const override {
        return lc_.planner == LearnerConfig::Planner::Vi ? "ucrl2-vi" : "ucrl2-whittle";
    }

    void reset(std::uint64_t) override {
        const std::size_t params = static_cast<std::size_t>(users_ * levels_);
        attempts_.assign(params, 0);
        failures_.assign(params, 0);
        local_.assign(params, 0);
        start_counts_.assign(params, 0);
        optimistic_.assign(params, 0.0);
        transmissions_ = 0;
        t_ = 1;
        t_episode_ = 1;
        eta_ = 0.0;
        episodes_.clear();
        warm_ = {};
        plan_.action.clear();
        plan_sweeps_ = 0;
        episode_pending_ = true;
    }

    Action act(const SystemState& s, std::uint64_t) override {
        if (episode_pending_) begin_episode();
        if (lc_.planner == LearnerConfig::Planner::Vi)
            return plan_.at(space_->digest(s), users_);
        return whittle_action(s, wctx_);
    }

    void observe(const StepFeedback& fb) override {
        if (trace_) write_trace(fb);
        if (fb.tx_cost) {
            const std::size_t pid = param_of(fb.action, fb.state);
            ++attempts_[pid];
            ++local_[pid];
            ++transmissions_;
            if (!fb.delivered) ++failures_[pid];
            if (!episode_pending_ &&
                local_[pid] >= std::max<std::uint64_t>(1, start_counts_[pid]))
                close_episode(EpisodeRecord::End::Count);
        }
        ++t_;
        // Backstop: an all-idle policy never doubles any counter, so an
        // episode also closes once it is as long as its start time.
        if (!episode_pending_ && t_ - t_episode_ >= t_episode_)
            close_episode(EpisodeRecord::End::TimeCap);
    }

    void set_trace(std::ostream* out) override { trace_ = out; }

    // Introspection for tests and diagnostics.
    std::uint64_t attempts(int j, int r = 0) const { return attempts_[pid_of(j, r)]; }
    std::uint64_t failures(int j, int r = 0) const { return failures_[pid_of(j, r)]; }
    std::uint64_t transmissions() const { return transmissions_; }
    double eta() const { return eta_; }
    double optimistic_rate(int j, int r = 0) const { return optimistic_[pid_of(j, r)]; }
    const std::vector<EpisodeRecord>& episodes() const { return episodes_; }
    std::uint64_t now() const { return t_; }
    std::uint64_t plan_sweeps() const { return plan_sweeps_; }  // cumulative, VI planner only

private:
    std::size_t pid_of(int j, int r) const {
        return static_cast<std::size_t>(j * levels_ + r);
    }

    std::size_t param_of(const Action& a, const SystemState& s) const {
        if (a.kind == ActionKind::NewPacket) return pid_of(a.user, 0);
        return pid_of(a.user, s.retx[static_cast<std::size_t>(a.user)]);
    }

    void begin_episode() {
        t_episode_ = t_;
        eta_ = std::max(0.0, eta_ + lc_.alpha * (static_cast<double>(transmissions_) /
                                                     static_cast<double>(t_episode_) -
                                                 cfg_.lambda));
        start_counts_ = attempts_;
        std::fill(local_.begin(), local_.end(), 0);
        const double log_term = confidence_log_term(cfg_, t_episode_, lc_.confidence);
        for (int j = 0; j < users_; ++j) {
            for (int r = 0; r < levels_; ++r) {
                const std::size_t pid = pid_of(j, r);
                optimistic_[pid] =
                    optimistic_error_rate(failures_[pid], attempts_[pid], log_term, lc_.U);
                // Keep the optimistic curve physically sensible (error can
                // only drop with combining); taking the running minimum
                // never raises an estimate, so optimism is preserved.
                if (r > 0) optimistic_[pid] = std::min(optimistic_[pid], optimistic_[pid_of(j, r - 1)]);
            }
        }
        replan();
        EpisodeRecord rec;
        rec.t_start = t_episode_;
        rec.eta = eta_;
        rec.optimistic = optimistic_;
        rec.start_counts = start_counts_;
        episodes_.push_back(std::move(rec));
        episode_pending_ = false;
    }

    void close_episode(EpisodeRecord::End why) {
        episodes_.back().end = why;
        episodes_.back().end_local = local_;
        episode_pending_ = true;
    }

    void replan() {
        if (lc_.planner == LearnerConfig::Planner::Whittle) {
            wctx_.eta = eta_;
            wctx_.error_probs.assign(static_cast<std::size_t>(users_), 0.0);
            for (int j = 0; j < users_; ++j)
                wctx_.error_probs[static_cast<std::size_t>(j)] = optimistic_[pid_of(j, 0)];
            return;
        }
        EnvConfig model = cfg_;
        for (int j = 0; j < users_; ++j) {
            auto& curve = model.channels[static_cast<std::size_t>(j)].error_curve;
            for (int r = 0; r < levels_; ++r) curve[static_cast<std::size_t>(r)] = optimistic_[pid_of(j, r)];
        }
        RviOptions opts;
        opts.tol = lc_.planner_tol;
        opts.max_sweeps = lc_.planner_max_sweeps;
        opts.state_ceiling = lc_.state_ceiling;
        opts.relaxation = lc_.planner_relaxation;
        opts.evaluate = false;
        opts.warm_start = warm_.propose(eta_);
        SolveResult sol = [&] {
            try {
                return rvi({model, eta_}, opts);
            } catch (const RviBudgetError& err) {
                // Keep the capped iterate: its greedy policy is still an
                // optimistic plan, just a less polished one, and the next
                // episode replans anyway.
                return err.partial;
            }
        }();
        plan_ = std::move(sol.policy);
        plan_sweeps_ += static_cast<std::uint64_t>(sol.sweeps);
        warm_.push(eta_, std::move(sol.h));
    }

    std::size_t trace_digest(const SystemState& s) const {
        if (space_) return space_->digest(s);
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto mix = [&h](std::uint64_t x) {
            h ^= x;
            h *= 0x100000001b3ULL;
        };
        for (int j = 0; j < users_; ++j) {
            mix(static_cast<std::uint64_t>(
                std::min(s.age[static_cast<std::size_t>(j)], cfg_.delta_max)));
            mix(static_cast<std::uint64_t>(s.retx[static_cast<std::size_t>(j)]));
        }
        return static_cast<std::size_t>(h);
    }

    void write_trace(const StepFeedback& fb) {
        const double cost = fb.age_cost + eta_ * fb.tx_cost;
        const int feedback = fb.tx_cost ? (fb.delivered ? 1 : 0) : -1;
        char line[160];
        std::snprintf(line, sizeof line, "%llu,%zu,%s,%d,%.10g,%.10g\n",
                      static_cast<unsigned long long>(t_), trace_digest(fb.state),
                      to_string(fb.action).c_str(), feedback, cost, eta_);
        *trace_ << line;
    }

    EnvConfig cfg_;
    LearnerConfig lc_;
    int users_;
    int levels_;  // retransmission levels tracked per user (1 under ARQ)
    std::optional<StateSpace> space_;
    WhittleContext wctx_;

    std::vector<std::uint64_t> attempts_, failures_, local_, start_counts_;
    std::vector<double> optimistic_;
    std::uint64_t transmissions_ = 0;
    std::uint64_t t_ = 1;
    std::uint64_t t_episode_ = 1;
    double eta_ = 0.0;
    bool episode_pending_ = true;
    DeterministicPolicy plan_;
    detail::SecantWarm warm_;  // two-deep (eta, h) history across replans
    std::uint64_t plan_sweeps_ = 0;
    std::vector<EpisodeRecord> episodes_;
    std::ostream* trace_ = nullptr;
};

// ---------------------------------------------------------------------------
// Differential SARSA.

// One temporal-difference update of the differential action value.
inline double sarsa_update(double q, double cost, double rho, double q_next, double beta) {
    return q + beta * (cost - rho + q_next - q);
}

class SarsaAgent : public Agent {
public:
    SarsaAgent(const EnvConfig& cfg, const LearnerConfig& lc)
        : cfg_(cfg), lc_(lc), space_(cfg, lc.state_ceiling), users_(cfg.users()),
          n_actions_(action_count(cfg.users())) {
        cfg_.validate();
        lc_.validate();
        reset(0);
    }

    std::string name() const override { return "sarsa"; }

    void reset(std::uint64_t seed) override {
        q_.assign(space_.size() * static_cast<std::size_t>(n_actions_), 0.0);
        visits_.assign(q_.size(), 0);
        rho_ = 0.0;
        eta_ = 0.0;
        t_ = 1;
        transmissions_ = 0;
        next_price_update_ = 2;
        rng_ = Rng(seed);
        pending_ = false;
    }

    Action act(const SystemState& s, std::uint64_t) override {
        const std::size_t digest = space_.digest(s);
        const auto [aid, greedy] = choose(digest, s);
        if (pending_) {
            double& q = q_[prev_cell_];
            q = sarsa_update(q, pending_cost_, rho_, q_[digest * static_cast<std::size_t>(n_actions_) +
                                                        static_cast<std::size_t>(aid)],
                             pending_beta_);
            if (prev_greedy_) rho_ += lc_.sarsa_rho_step * (pending_cost_ - rho_);
            pending_ = false;
        }
        const std::size_t cell =
            digest * static_cast<std::size_t>(n_actions_) + static_cast<std::size_t>(aid);
        prev_cell_ = cell;
        prev_greedy_ = greedy;
        pending_beta_ = lc_.sarsa_beta0 * lc_.sarsa_beta_pivot /
                        (lc_.sarsa_beta_pivot + static_cast<double>(visits_[cell]));
        ++visits_[cell];
        return action_from_id(aid, users_);
    }

    void observe(const StepFeedback& fb) override {
        pending_cost_ = fb.age_cost + eta_ * fb.tx_cost;
        pending_ = true;
        if (trace_) write_trace(fb);
        if (fb.tx_cost) ++transmissions_;
        ++t_;
        // Price adaptation on a doubling schedule (an episodic cadence, as
        // the optimistic learner uses, without its counters).
        if (t_ >= next_price_update_) {
            eta_ = std::max(0.0, eta_ + lc_.alpha * (static_cast<double>(transmissions_) /
                                                         static_cast<double>(t_) -
                                                     cfg_.lambda));
            next_price_update_ *= 2;
        }
    }

    void set_trace(std::ostream* out) override { trace_ = out; }

    double rho() const { return rho_; }
    double eta() const { return eta_; }
    double q_value(std::size_t digest, int aid) const {
        return q_[digest * static_cast<std::size_t>(n_actions_) + static_cast<std::size_t>(aid)];
    }

private:
    // Epsilon-greedy over the feasible action ids; returns (id, whether the
    // id is the current greedy choice).  Ties prefer the lowest id, so idle
    // wins ties and users are served in order.
    std::pair<int, bool> choose(std::size_t digest, const SystemState& s) {
        feasible_.clear();
        for (int id = 0; id <= users_; ++id) feasible_.push_back(id);
        if (cfg_.protocol == Protocol::Harq)
            for (int j = 0; j < users_; ++j) {
                const int r = s.retx[static_cast<std::size_t>(j)];
                if (r >= 1 && r < cfg_.r_max) feasible_.push_back(1 + users_ + j);
            }
        int best = feasible_.front();
        double best_q = std::numeric_limits<double>::infinity();
        for (int id : feasible_) {
            const double q = q_[digest * static_cast<std::size_t>(n_actions_) +
                                static_cast<std::size_t>(id)];
            if (q < best_q) {
                best_q = q;
                best = id;
            }
        }
        const double frac =
            std::min(1.0, static_cast<double>(t_) / static_cast<double>(lc_.horizon));
        const double eps = lc_.sarsa_eps0 + (lc_.sarsa_eps1 - lc_.sarsa_eps0) * frac;
        int chosen = best;
        if (rng_.uniform() < eps)
            chosen = feasible_[static_cast<std::size_t>(
                rng_.uniform_int(static_cast<int>(feasible_.size())))];
        return {chosen, chosen == best};
    }

    void write_trace(const StepFeedback& fb) {
        const double cost = fb.age_cost + eta_ * fb.tx_cost;
        const int feedback = fb.tx_cost ? (fb.delivered ? 1 : 0) : -1;
        char line[160];
        std::snprintf(line, sizeof line, "%llu,%zu,%s,%d,%.10g,%.10g\n",
                      static_cast<unsigned long long>(t_), space_.digest(fb.state),
                      to_string(fb.action).c_str(), feedback, cost, eta_);
        *trace_ << line;
    }

    EnvConfig cfg_;
    LearnerConfig lc_;
    StateSpace space_;
    int users_;
    int n_actions_;

    std::vector<double> q_;
    std::vector<std::uint32_t> visits_;
    std::vector<int> feasible_;
    double rho_ = 0.0;
    double eta_ = 0.0;
    std::uint64_t t_ = 1;
    std::uint64_t transmissions_ = 0;
    std::uint64_t next_price_update_ = 2;
    Rng rng_{0};
    bool pending_ = false;
    std::size_t prev_cell_ = 0;
    bool prev_greedy_ = false;
    double pending_cost_ = 0.0;
    double pending_beta_ = 0.0;
    std::ostream* trace_ = nullptr;
};

}  // namespace aoi
