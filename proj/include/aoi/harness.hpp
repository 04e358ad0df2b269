#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "aoi/agents.hpp"
#include "aoi/env.hpp"
#include "aoi/learn.hpp"
#include "aoi/policy.hpp"
#include "aoi/rng.hpp"
#include "aoi/solve.hpp"
#include "aoi/types.hpp"

// Seeded Monte-Carlo experiment runner.  Rollouts are uncapped (planner
// truncation never biases the measured averages; a flag records whether the
// cap would have bound), deterministic per seed, and charge the age cost on
// the state each slot starts in.

namespace aoi {

struct RolloutOptions {
    std::uint64_t burn_in = 0;       // slots excluded from the averages (from t=1)
    std::uint64_t curve_stride = 0;  // record (t, running avg age) every stride slots; 0 = off
    std::ostream* trace = nullptr;   // learner trajectory log sink
};

struct RunMetrics {
    std::uint64_t horizon = 0;
    std::uint64_t seed = 0;
    double j_emp = 0.0;        // time-average weighted age
    double c_emp = 0.0;        // time-average transmission indicator
    bool cap_binding = false;  // true if some age ever exceeded cfg.delta_max
    std::vector<std::pair<std::uint64_t, double>> curve;
};

// Runs one episode of `horizon` slots.  The channel stream and the agent's
// internal stream are split from `seed`, so agents never perturb the
// channel draws.  An infeasible agent action aborts with the slot and
// state spelled out; nothing is silently substituted.
inline RunMetrics rollout(Agent& agent, const EnvConfig& cfg, std::uint64_t horizon,
                          std::uint64_t seed, const RolloutOptions& opts = {}) {
    cfg.validate();
    if (horizon < 1) throw ValidationError("rollout: horizon must be >= 1");
    if (opts.burn_in >= horizon)
        throw ValidationError("rollout: burn-in must be smaller than the horizon");

    Rng channel(derive_seed(seed, {hash_string("channel-stream")}));
    agent.reset(derive_seed(seed, {hash_string("agent-stream")}));
    agent.set_trace(opts.trace);

    RunMetrics m;
    m.horizon = horizon;
    m.seed = seed;
    SystemState s = initial_state(cfg);
    double age_sum = 0.0;
    std::uint64_t tx_sum = 0;
    for (std::uint64_t t = 0; t < horizon; ++t) {
        const Action a = agent.act(s, t);
        if (!is_feasible(a, s, cfg))
            throw RolloutError("slot " + std::to_string(t + 1) + ": agent '" + agent.name() +
                               "' chose infeasible action " + to_string(a) + " in state " +
                               to_string(s));
        StepResult res = step(s, a, cfg, channel, AgeCap::None);
        StepFeedback fb;
        fb.t = t;
        fb.state = std::move(s);
        fb.action = a;
        fb.next = res.next;
        fb.age_cost = res.age_cost;
        fb.tx_cost = res.tx_cost;
        fb.delivered = res.delivered;
        agent.observe(fb);
        if (t >= opts.burn_in) {
            age_sum += res.age_cost;
            tx_sum += static_cast<std::uint64_t>(res.tx_cost);
        }
        if (!m.cap_binding)
            for (int age : res.next.age)
                if (age > cfg.delta_max) {
                    m.cap_binding = true;
                    break;
                }
        if (opts.curve_stride && (t + 1) % opts.curve_stride == 0 && t + 1 > opts.burn_in)
            m.curve.emplace_back(t + 1,
                                 age_sum / static_cast<double>(t + 1 - opts.burn_in));
        s = std::move(res.next);
    }
    const double counted = static_cast<double>(horizon - opts.burn_in);
    m.j_emp = age_sum / counted;
    m.c_emp = static_cast<double>(tx_sum) / counted;
    return m;
}

// First recorded time from which a running-average curve stays at or below
// `threshold`; nullopt when it never settles there.
inline std::optional<std::uint64_t> settle_time(
    const std::vector<std::pair<std::uint64_t, double>>& curve, double threshold) {
    if (curve.empty()) return std::nullopt;
    std::size_t last_above = curve.size();
    for (std::size_t i = 0; i < curve.size(); ++i)
        if (curve[i].second > threshold) last_above = i;
    if (last_above == curve.size()) return curve.front().first;  // never above
    if (last_above + 1 >= curve.size()) return std::nullopt;     // still above at the end
    return curve[last_above + 1].first;
}

// ---------------------------------------------------------------------------
// Sweeps.

// One competitor in a preset.  `make` builds a fresh agent per sweep cell
// (reset per replicate); when it is absent the row is a closed-form
// reference line computed by `reference` (e.g. the ARQ age floor).
struct AgentSpec {
    std::string label;
    std::function<std::unique_ptr<Agent>(const EnvConfig&)> make;
    std::function<double(const EnvConfig&)> reference;
};

struct ExperimentPreset {
    std::string name;
    std::string sweep_var;
    std::vector<double> sweep_values;
    std::function<EnvConfig(double)> env_at;
    std::vector<AgentSpec> agents;
    std::uint64_t horizon = 100000;
    int seeds = 10;
    std::uint64_t master_seed = 12345;
    std::uint64_t curve_stride = 0;
    std::uint64_t burn_in = 0;
};

struct SweepRow {
    std::string preset;
    std::string sweep_var;
    double sweep_value = 0.0;
    std::string agent;
    int seed_count = 0;
    double mean_j = std::numeric_limits<double>::quiet_NaN();
    double std_j = std::numeric_limits<double>::quiet_NaN();
    double mean_c = std::numeric_limits<double>::quiet_NaN();
    double std_c = std::numeric_limits<double>::quiet_NaN();
    bool failed = false;
    std::string error;
};

struct CurveRow {
    double sweep_value = 0.0;
    std::string agent;
    std::uint64_t t = 0;
    double mean_running_age = 0.0;
};

struct SweepOutput {
    std::vector<SweepRow> rows;
    std::vector<CurveRow> curves;
};

// Replicate seeds mix the master seed with the agent label, the sweep
// position, and the replicate index, so every cell draws an independent,
// reproducible stream.
inline std::uint64_t replicate_seed(std::uint64_t master, const std::string& agent_label,
                                    std::size_t sweep_index, int replicate) {
    return derive_seed(master, {hash_string(agent_label), static_cast<std::uint64_t>(sweep_index),
                                static_cast<std::uint64_t>(replicate)});
}

namespace detail {

inline std::pair<double, double> mean_and_std(const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    return {mean, std::sqrt(var / n)};  // population std: defined even for one seed
}

}  // namespace detail

// Runs seeds x agents x sweep points in a fixed order.  A failing cell is
// recorded as a failure row (NaN statistics, error text kept) without
// aborting the rest of the sweep.
inline SweepOutput run_sweep(const ExperimentPreset& preset) {
    if (preset.seeds < 1) throw ValidationError("sweep: need at least one seed");
    SweepOutput out;
    for (std::size_t si = 0; si < preset.sweep_values.size(); ++si) {
        const double sv = preset.sweep_values[si];
        const EnvConfig cfg = preset.env_at(sv);
        cfg.validate();
        for (const AgentSpec& spec : preset.agents) {
            SweepRow row;
            row.preset = preset.name;
            row.sweep_var = preset.sweep_var;
            row.sweep_value = sv;
            row.agent = spec.label;
            if (!spec.make) {
                row.mean_j = spec.reference(cfg);
                row.std_j = 0.0;
                out.rows.push_back(std::move(row));
                continue;
            }
            try {
                const std::unique_ptr<Agent> agent = spec.make(cfg);
                std::vector<double> js, cs;
                std::vector<CurveRow> cell_curves;
                std::vector<double> curve_sums;
                std::vector<std::uint64_t> curve_ts;
                for (int rep = 0; rep < preset.seeds; ++rep) {
                    RolloutOptions ropts;
                    ropts.burn_in = preset.burn_in;
                    ropts.curve_stride = preset.curve_stride;
                    const RunMetrics m =
                        rollout(*agent, cfg, preset.horizon,
                                replicate_seed(preset.master_seed, spec.label, si, rep), ropts);
                    js.push_back(m.j_emp);
                    cs.push_back(m.c_emp);
                    if (preset.curve_stride) {
                        if (curve_sums.empty()) {
                            curve_sums.assign(m.curve.size(), 0.0);
                            curve_ts.reserve(m.curve.size());
                            for (const auto& [t, v] : m.curve) curve_ts.push_back(t);
                        }
                        for (std::size_t i = 0; i < m.curve.size() && i < curve_sums.size(); ++i)
                            curve_sums[i] += m.curve[i].second;
                    }
                }
                row.seed_count = preset.seeds;
                std::tie(row.mean_j, row.std_j) = detail::mean_and_std(js);
                std::tie(row.mean_c, row.std_c) = detail::mean_and_std(cs);
                for (std::size_t i = 0; i < curve_sums.size(); ++i)
                    out.curves.push_back({sv, spec.label, curve_ts[i],
                                          curve_sums[i] / static_cast<double>(preset.seeds)});
            } catch (const std::exception& err) {
                row.failed = true;
                row.error = err.what();
                row.seed_count = 0;
            }
            out.rows.push_back(std::move(row));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV emission (fixed formatting: byte-identical output for identical runs).

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "preset,sweep_var,sweep_value,agent,seed_count,mean_J,std_J,mean_C,std_C\n";
    char buf[224];
    for (const SweepRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%.10g", r.sweep_value);
        out << r.preset << ',' << r.sweep_var << ',' << buf << ',' << r.agent << ',';
        std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g\n", r.seed_count, r.mean_j,
                      r.std_j, r.mean_c, r.std_c);
        out << buf;
    }
}

inline void write_curves_csv(std::ostream& out, const std::string& preset,
                             const std::vector<CurveRow>& rows) {
    out << "preset,sweep_value,agent,t,mean_running_J\n";
    char buf[160];
    for (const CurveRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%.10g,%s,%llu,%.10g\n", r.sweep_value, r.agent.c_str(),
                      static_cast<unsigned long long>(r.t), r.mean_running_age);
        out << preset << ',' << buf;
    }
}

}  // namespace aoi
