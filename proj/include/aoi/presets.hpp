#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "aoi/agents.hpp"
#include "aoi/harness.hpp"
#include "aoi/learn.hpp"
#include "aoi/policy.hpp"
#include "aoi/solve.hpp"
#include "aoi/types.hpp"

// Bundled experiment presets:
//   rate-sweep        3-user ARQ, age vs transmission budget, learners vs the closed-form floor
//   size-sweep        ARQ networks of 2..6 users at full budget, learner vs known-p baselines
//   arq-learning      3-user ARQ learning curves (optimistic learner vs SARSA vs solved oracle)
//   harq-learning     2-user HARQ learning curves
// The short aliases fig2..fig5 map onto them in that order.

namespace aoi {

inline EnvConfig arq_config(std::vector<double> p, std::vector<double> w, double lambda,
                            int delta_max) {
    EnvConfig cfg;
    cfg.protocol = Protocol::Arq;
    cfg.r_max = 0;
    cfg.delta_max = delta_max;
    cfg.lambda = lambda;
    for (std::size_t j = 0; j < p.size(); ++j)
        cfg.channels.push_back({{p[j]}, w.empty() ? 1.0 : w[j]});
    cfg.validate();
    return cfg;
}

// Geometric retransmission-error family g(r) = p0 * q^r, r = 0..r_max.
inline EnvConfig harq_config(int users, double p0, double q, int r_max, std::vector<double> w,
                             double lambda, int delta_max) {
    EnvConfig cfg;
    cfg.protocol = Protocol::Harq;
    cfg.r_max = r_max;
    cfg.delta_max = delta_max;
    cfg.lambda = lambda;
    std::vector<double> curve;
    for (int r = 0; r <= r_max; ++r) curve.push_back(p0 * std::pow(q, r));
    for (int j = 0; j < users; ++j)
        cfg.channels.push_back({curve, w.empty() ? 1.0 : w[static_cast<std::size_t>(j)]});
    cfg.validate();
    return cfg;
}

namespace detail {

inline AgentSpec ucrl_spec(LearnerConfig::Planner planner, std::uint64_t horizon) {
    LearnerConfig lc;
    lc.planner = planner;
    lc.horizon = horizon;
    const std::string label =
        planner == LearnerConfig::Planner::Vi ? "ucrl2-vi" : "ucrl2-whittle";
    return {label,
            [lc](const EnvConfig& cfg) -> std::unique_ptr<Agent> {
                return std::make_unique<UcrlAgent>(cfg, lc);
            },
            nullptr};
}

inline AgentSpec sarsa_spec(std::uint64_t horizon) {
    LearnerConfig lc;
    lc.horizon = horizon;
    return {"sarsa",
            [lc](const EnvConfig& cfg) -> std::unique_ptr<Agent> {
                return std::make_unique<SarsaAgent>(cfg, lc);
            },
            nullptr};
}

// Plays the exact solution of the truncated model (solved once per cell).
inline AgentSpec oracle_spec() {
    return {"vi-oracle",
            [](const EnvConfig& cfg) -> std::unique_ptr<Agent> {
                RviOptions opts;
                opts.evaluate = false;
                SolveResult sol = rvi({cfg, 0.0}, opts);
                return std::make_unique<TablePolicyAgent>("vi-oracle", cfg, std::move(sol.policy));
            },
            nullptr};
}

inline AgentSpec bound_spec() {
    return {"lower-bound", nullptr,
            [](const EnvConfig& cfg) { return lower_bound(cfg).value; }};
}

}  // namespace detail

// Age vs budget on a 3-user ARQ downlink, p = (0.5, 0.2, 0.1), unit
// weights: both optimistic learners against the closed-form floor.
inline ExperimentPreset rate_sweep_preset(int seeds = 10, std::uint64_t horizon = 100000) {
    ExperimentPreset p;
    p.name = "rate-sweep";
    p.sweep_var = "lambda";
    p.sweep_values = {0.3, 0.4, 0.5, 0.7, 1.0};
    p.env_at = [](double lambda) {
        return arq_config({0.5, 0.2, 0.1}, {1.0, 1.0, 1.0}, lambda, 50);
    };
    p.agents = {detail::ucrl_spec(LearnerConfig::Planner::Vi, horizon),
                detail::ucrl_spec(LearnerConfig::Planner::Whittle, horizon),
                detail::bound_spec()};
    p.horizon = horizon;
    p.seeds = seeds;
    return p;
}

// Age vs network size at full budget, error rates equally spaced below 1
// (user j of M gets p = (j-1)/M, so the best channel is perfect).
inline ExperimentPreset size_sweep_preset(int seeds = 10, std::uint64_t horizon = 100000,
                                          std::vector<double> sizes = {2, 3, 4, 5, 6}) {
    ExperimentPreset p;
    p.name = "size-sweep";
    p.sweep_var = "users";
    p.sweep_values = std::move(sizes);
    p.env_at = [](double size) {
        const int m = static_cast<int>(size);
        std::vector<double> probs, weights;
        for (int j = 0; j < m; ++j) {
            probs.push_back(static_cast<double>(j) / static_cast<double>(m));
            weights.push_back(1.0);
        }
        return arq_config(probs, weights, 1.0, 50);
    };
    p.agents = {detail::ucrl_spec(LearnerConfig::Planner::Whittle, horizon),
                {"whittle",
                 [](const EnvConfig& cfg) -> std::unique_ptr<Agent> {
                     return std::make_unique<WhittleAgent>(cfg);
                 },
                 nullptr},
                {"greedy",
                 [](const EnvConfig& cfg) -> std::unique_ptr<Agent> {
                     return std::make_unique<GreedyAgent>(cfg);
                 },
                 nullptr},
                {"round-robin",
                 [](const EnvConfig& cfg) -> std::unique_ptr<Agent> {
                     return std::make_unique<RoundRobinAgent>(cfg);
                 },
                 nullptr},
                detail::bound_spec()};
    p.horizon = horizon;
    p.seeds = seeds;
    return p;
}

// Learning curves on the 3-user ARQ network at full budget: optimistic
// index learner vs SARSA vs the solved table.
inline ExperimentPreset arq_learning_preset(int seeds = 10, std::uint64_t horizon = 100000) {
    ExperimentPreset p;
    p.name = "arq-learning";
    p.sweep_var = "horizon";
    p.sweep_values = {static_cast<double>(horizon)};
    p.env_at = [](double) { return arq_config({0.5, 0.2, 0.1}, {1.0, 1.0, 1.0}, 1.0, 50); };
    p.agents = {detail::ucrl_spec(LearnerConfig::Planner::Whittle, horizon),
                detail::sarsa_spec(horizon), detail::oracle_spec()};
    p.horizon = horizon;
    p.seeds = seeds;
    p.curve_stride = std::max<std::uint64_t>(1, horizon / 200);
    return p;
}

// Learning curves on a 2-user HARQ downlink with halving error curve
// g(r) = 0.5 * 2^{-r}, retransmission cap 3.
inline ExperimentPreset harq_learning_preset(int seeds = 10, std::uint64_t horizon = 100000) {
    ExperimentPreset p;
    p.name = "harq-learning";
    p.sweep_var = "horizon";
    p.sweep_values = {static_cast<double>(horizon)};
    p.env_at = [](double) { return harq_config(2, 0.5, 0.5, 3, {1.0, 1.0}, 1.0, 30); };
    p.agents = {detail::ucrl_spec(LearnerConfig::Planner::Vi, horizon),
                detail::sarsa_spec(horizon), detail::oracle_spec()};
    p.horizon = horizon;
    p.seeds = seeds;
    p.curve_stride = std::max<std::uint64_t>(1, horizon / 200);
    return p;
}

// Preset lookup by name, accepting the short aliases fig2..fig5.
inline ExperimentPreset make_preset(const std::string& name, int seeds, std::uint64_t horizon,
                                    std::vector<double> sizes = {}) {
    if (name == "rate-sweep" || name == "fig2") return rate_sweep_preset(seeds, horizon);
    if (name == "size-sweep" || name == "fig3") {
        if (sizes.empty()) return size_sweep_preset(seeds, horizon);
        return size_sweep_preset(seeds, horizon, std::move(sizes));
    }
    if (name == "arq-learning" || name == "fig4") return arq_learning_preset(seeds, horizon);
    if (name == "harq-learning" || name == "fig5") return harq_learning_preset(seeds, horizon);
    throw ValidationError("unknown preset '" + name +
                          "' (available: rate-sweep/fig2, size-sweep/fig3, arq-learning/fig4, "
                          "harq-learning/fig5)");
}

}  // namespace aoi
