#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "aoi/env.hpp"
#include "aoi/state_space.hpp"
#include "aoi/types.hpp"

// Planning layer: relative value iteration on the age-capped chain for a
// fixed transmission price eta, exact stationary evaluation of table
// policies, subgradient ascent on eta to meet the rate constraint, and the
// two-policy randomized mixture that closes the duality gap.

namespace aoi {

// Average-cost problem with per-slot cost  sum_j w_j delta_j + eta * 1[transmit].
struct LagrangianProblem {
    EnvConfig env;
    double eta = 0.0;
};

// One action id per enumerated state (canonical ids; see action_id()).
struct DeterministicPolicy {
    std::vector<std::uint8_t> action;

    Action at(std::size_t state_index, int users) const {
        return action_from_id(static_cast<int>(action[state_index]), users);
    }
};

// Randomized mix of two deterministic policies: each slot, independently,
// follow `low` (priced at eta1 <= eta*, transmits more) with probability
// `mu`, else `high` (priced at eta2 >= eta*).
struct MixturePolicy {
    DeterministicPolicy low;
    DeterministicPolicy high;
    double mu = 1.0;
};

struct RviOptions {
    double tol = 1e-6;
    std::int64_t max_sweeps = 100000;
    std::size_t state_ceiling = 1'000'000;
    const std::vector<double>* warm_start = nullptr;  // h from a nearby problem
    bool evaluate = true;  // false: skip the stationary solve, leave avg_* as NaN
    // Weight on the new iterate:  h <- (1 - w) h + w T(h).  1 is the plain
    // update; 0.5 breaks the value cycles of periodic (e.g. deterministic)
    // chains without moving the fixed point or the stopping statistic.
    double relaxation = 1.0;
};

struct SolveResult {
    double gain = 0.0;            // optimal average Lagrangian cost
    std::vector<double> h;        // relative values with h(s_0) == 0
    DeterministicPolicy policy;   // greedy w.r.t. h, ties to lowest action id
    bool converged = true;        // false only on budget-error partials
    double avg_age = 0.0;         // J of the greedy policy (stationary, capped chain)
    double avg_tx = 0.0;          // C of the greedy policy
    std::int64_t sweeps = 0;
    double residual = 0.0;        // verified sup-norm Bellman residual
};

// Thrown when the sweep budget runs out before the span target.  Carries the
// last iterate (h, greedy policy, gain, and the residual as of that sweep;
// stationary averages are left NaN) so budget-aware callers can keep the
// partial answer.
struct RviBudgetError : SolveError {
    SolveResult partial;
    RviBudgetError(const std::string& what, SolveResult r)
        : SolveError(what), partial(std::move(r)) {}
};

// Caches (J, C) keyed by the policy table so the ascent loop, which
// revisits the same handful of policies while eta oscillates, pays for each
// stationary solve once.  `warm_pi` keeps the most recent stationary
// distribution (indexed by global state) as a warm start for the next solve:
// neighbouring prices induce nearby policies, so the iterative path converges
// in a few passes instead of starting from uniform every time.
struct PolicyEvalCache {
    std::unordered_map<std::string, std::pair<double, double>> jc;
    std::vector<double> warm_pi;
    // Drift target for iterative stationary solves routed through this cache.
    // The ascent loop loosens it: subgradient steps only need the rate to a
    // few decimals, while refinement always re-evaluates at full precision.
    double drift_tol = 1e-12;
};

namespace detail {

// Odometer over the dense enumeration that incrementally maintains, per
// state: the local codes, the "everyone ages" successor index, and the
// weighted age sum.  Avoids re-deriving per-user data state by state.
class SweepCursor {
public:
    SweepCursor(const StateSpace& space, const EnvConfig& cfg) : space_(space) {
        const int m = space.users();
        local_.assign(static_cast<std::size_t>(m), 0);
        weights_.resize(static_cast<std::size_t>(m));
        for (int j = 0; j < m; ++j) weights_[static_cast<std::size_t>(j)] = cfg.weight(j);
        aged_base_ = 0;
        weighted_age_ = 0.0;
        for (int j = 0; j < m; ++j) {
            aged_base_ += static_cast<std::int64_t>(space.aged_local(0)) *
                          static_cast<std::int64_t>(space.stride(j));
            weighted_age_ += weights_[static_cast<std::size_t>(j)] * 1.0;  // local 0 is delta=1
        }
    }

    std::size_t local(int j) const { return local_[static_cast<std::size_t>(j)]; }
    std::int64_t aged_base() const { return aged_base_; }
    double weighted_age() const { return weighted_age_; }

    bool advance() {
        const std::size_t dim = space_.local_dim();
        for (std::size_t j = 0; j < local_.size(); ++j) {
            const std::size_t old = local_[j];
            const std::size_t fresh = old + 1 == dim ? 0 : old + 1;
            local_[j] = fresh;
            const std::int64_t stride = static_cast<std::int64_t>(space_.stride(static_cast<int>(j)));
            aged_base_ += (static_cast<std::int64_t>(space_.aged_local(fresh)) -
                           static_cast<std::int64_t>(space_.aged_local(old))) *
                          stride;
            weighted_age_ += weights_[j] * static_cast<double>(space_.age_of_local(fresh) -
                                                               space_.age_of_local(old));
            if (fresh != 0) return true;  // no carry
        }
        return false;  // wrapped all the way around
    }

private:
    const StateSpace& space_;
    std::vector<std::size_t> local_;
    std::vector<double> weights_;
    std::int64_t aged_base_ = 0;
    double weighted_age_ = 0.0;
};

struct SweepStats {
    double diff_min = 0.0;
    double diff_max = 0.0;
    double diff_ref = 0.0;
};

// One Bellman sweep: writes T(h) into `out`, records the greedy action per
// state (strictly-better-wins scan in canonical order, so idle wins ties,
// then lower user, new before retransmit), and returns the statistics of
// diff(s) = T(h)(s) - h(s) used for the stopping rule.
inline SweepStats bellman_sweep(const StateSpace& space, const EnvConfig& cfg, double eta,
                                const std::vector<double>& h, std::size_t ref,
                                std::vector<double>& out, std::vector<std::uint8_t>& greedy) {
    const int m = space.users();
    std::vector<double> g0(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) g0[static_cast<std::size_t>(j)] = cfg.error_prob(j, 0);
    // Retransmission error by local code (the curve depends only on r).
    std::vector<double> gret(static_cast<std::size_t>(m) * space.local_dim(), 0.0);
    for (int j = 0; j < m; ++j)
        for (std::size_t l = 0; l < space.local_dim(); ++l)
            if (space.retx_allowed(l))
                gret[static_cast<std::size_t>(j) * space.local_dim() + l] =
                    cfg.error_prob(j, space.retx_of_local(l));

    SweepCursor cur(space, cfg);
    SweepStats st;
    st.diff_min = std::numeric_limits<double>::infinity();
    st.diff_max = -std::numeric_limits<double>::infinity();
    std::size_t idx = 0;
    do {
        const std::int64_t base = cur.aged_base();
        const double age_now = cur.weighted_age();
        double best = age_now + h[static_cast<std::size_t>(base)];  // idle
        int best_id = 0;
        for (int j = 0; j < m; ++j) {
            const std::size_t l = cur.local(j);
            const std::int64_t stride = static_cast<std::int64_t>(space.stride(j));
            const std::int64_t keep = base - static_cast<std::int64_t>(space.aged_local(l)) * stride;
            const double g = g0[static_cast<std::size_t>(j)];
            const double q =
                age_now + eta + (1.0 - g) * h[static_cast<std::size_t>(keep)] +
                g * h[static_cast<std::size_t>(
                        keep + static_cast<std::int64_t>(space.new_fail_local(l)) * stride)];
            if (q < best) { best = q; best_id = 1 + j; }
        }
        for (int j = 0; j < m; ++j) {
            const std::size_t l = cur.local(j);
            if (!space.retx_allowed(l)) continue;
            const std::int64_t stride = static_cast<std::int64_t>(space.stride(j));
            const std::int64_t keep = base - static_cast<std::int64_t>(space.aged_local(l)) * stride;
            const double g = gret[static_cast<std::size_t>(j) * space.local_dim() + l];
            const double q =
                age_now + eta +
                (1.0 - g) * h[static_cast<std::size_t>(
                                keep + static_cast<std::int64_t>(space.retx_succ_local(l)) * stride)] +
                g * h[static_cast<std::size_t>(
                        keep + static_cast<std::int64_t>(space.retx_fail_local(l)) * stride)];
            if (q < best) { best = q; best_id = 1 + m + j; }
        }
        out[idx] = best;
        greedy[idx] = static_cast<std::uint8_t>(best_id);
        const double diff = best - h[idx];
        st.diff_min = std::min(st.diff_min, diff);
        st.diff_max = std::max(st.diff_max, diff);
        if (idx == ref) st.diff_ref = diff;
        ++idx;
    } while (cur.advance());
    return st;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stationary evaluation of table policies.

namespace detail {

// Per-state action support: (action id, probability) pairs.
using ActionMix = std::vector<std::pair<int, double>>;

struct ReachableChain {
    std::vector<std::size_t> states;                 // global indices, BFS order
    std::vector<int> id_of;                          // global index -> compact id, -1 unseen
    std::vector<std::vector<std::pair<int, double>>> rows;  // compact successor lists
    std::vector<double> age_cost;                    // weighted age per compact state
    std::vector<double> tx_prob;                     // P(action transmits) per compact state
};

template <typename MixFn>
ReachableChain build_chain(const StateSpace& space, const EnvConfig& cfg, MixFn&& mix_of) {
    ReachableChain chain;
    chain.id_of.assign(space.size(), -1);
    const std::size_t start = space.index_of(initial_state(cfg));
    chain.id_of[start] = 0;
    chain.states.push_back(start);
    // `states` doubles as the BFS queue; compact ids are assigned in
    // discovery order, so processing in id order keeps `rows` aligned.
    for (std::size_t head = 0; head < chain.states.size(); ++head) {
        const SystemState s = space.state_of(chain.states[head]);
        chain.age_cost.push_back(age_cost(s, cfg));
        std::vector<std::pair<int, double>> row;
        double tx = 0.0;
        for (const auto& [aid, w] : mix_of(chain.states[head])) {
            if (w <= 0.0) continue;
            const Action a = action_from_id(aid, cfg.users());
            if (a.is_transmit()) tx += w;
            for (const Outcome& o : transition_distribution(s, a, cfg, AgeCap::DeltaMax)) {
                const std::size_t n_idx = space.index_of(o.state);
                int& id = chain.id_of[n_idx];
                if (id < 0) {
                    id = static_cast<int>(chain.states.size());
                    chain.states.push_back(n_idx);
                }
                row.emplace_back(id, w * o.prob);
            }
        }
        std::sort(row.begin(), row.end());
        std::size_t keep = 0;  // merge branches that collapsed onto one successor
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (keep > 0 && row[keep - 1].first == row[i].first)
                row[keep - 1].second += row[i].second;
            else
                row[keep++] = row[i];
        }
        row.resize(keep);
        chain.rows.push_back(std::move(row));
        chain.tx_prob.push_back(tx);
    }
    return chain;
}

// Iterative Tarjan; returns the SCC id per node (ids in reverse topological
// order) and the number of components.
inline int strongly_connected_components(const std::vector<std::vector<std::pair<int, double>>>& rows,
                                         std::vector<int>& comp) {
    const int n = static_cast<int>(rows.size());
    comp.assign(static_cast<std::size_t>(n), -1);
    std::vector<int> index(static_cast<std::size_t>(n), -1), low(static_cast<std::size_t>(n), 0);
    std::vector<char> on_stack(static_cast<std::size_t>(n), 0);
    std::vector<int> stack;
    struct Frame { int v; std::size_t edge; };
    std::vector<Frame> call;
    int next_index = 0, comps = 0;
    for (int root = 0; root < n; ++root) {
        if (index[static_cast<std::size_t>(root)] != -1) continue;
        call.push_back({root, 0});
        index[static_cast<std::size_t>(root)] = low[static_cast<std::size_t>(root)] = next_index++;
        stack.push_back(root);
        on_stack[static_cast<std::size_t>(root)] = 1;
        while (!call.empty()) {
            Frame& f = call.back();
            const auto& edges = rows[static_cast<std::size_t>(f.v)];
            if (f.edge < edges.size()) {
                const int w = edges[f.edge++].first;
                if (index[static_cast<std::size_t>(w)] == -1) {
                    index[static_cast<std::size_t>(w)] = low[static_cast<std::size_t>(w)] = next_index++;
                    stack.push_back(w);
                    on_stack[static_cast<std::size_t>(w)] = 1;
                    call.push_back({w, 0});
                } else if (on_stack[static_cast<std::size_t>(w)]) {
                    low[static_cast<std::size_t>(f.v)] =
                        std::min(low[static_cast<std::size_t>(f.v)], index[static_cast<std::size_t>(w)]);
                }
            } else {
                if (low[static_cast<std::size_t>(f.v)] == index[static_cast<std::size_t>(f.v)]) {
                    while (true) {
                        const int w = stack.back();
                        stack.pop_back();
                        on_stack[static_cast<std::size_t>(w)] = 0;
                        comp[static_cast<std::size_t>(w)] = comps;
                        if (w == f.v) break;
                    }
                    ++comps;
                }
                const int v = f.v;
                call.pop_back();
                if (!call.empty())
                    low[static_cast<std::size_t>(call.back().v)] =
                        std::min(low[static_cast<std::size_t>(call.back().v)], low[static_cast<std::size_t>(v)]);
            }
        }
    }
    return comps;
}

// Stationary distribution over the chain's single closed class; states off
// that class get probability 0.  Direct sparse LU up to `lu_limit` states,
// damped power iteration beyond.  `warm_global` (indexed by global state)
// optionally seeds the iterative path and receives the solution, so a run of
// solves over slowly-drifting policies converges quickly.
inline std::vector<double> stationary_distribution(const ReachableChain& chain,
                                                   std::size_t lu_limit = 50'000,
                                                   std::vector<double>* warm_global = nullptr,
                                                   double drift_tol = 1e-12) {
    const int n = static_cast<int>(chain.states.size());
    std::vector<int> comp;
    const int comps = strongly_connected_components(chain.rows, comp);
    // Closed class = SCC with no edge leaving it.
    std::vector<char> leaks(static_cast<std::size_t>(comps), 0);
    for (int v = 0; v < n; ++v)
        for (const auto& [w, p] : chain.rows[static_cast<std::size_t>(v)])
            if (comp[static_cast<std::size_t>(v)] != comp[static_cast<std::size_t>(w)])
                leaks[static_cast<std::size_t>(comp[static_cast<std::size_t>(v)])] = 1;
    int closed = -1, closed_count = 0;
    for (int c = 0; c < comps; ++c)
        if (!leaks[static_cast<std::size_t>(c)]) { closed = c; ++closed_count; }
    if (closed_count != 1)
        throw SolveError("policy chain has " + std::to_string(closed_count) +
                         " closed classes; long-run averages are start-dependent");

    std::vector<int> core;  // compact ids in the closed class
    for (int v = 0; v < n; ++v)
        if (comp[static_cast<std::size_t>(v)] == closed) core.push_back(v);
    const int k = static_cast<int>(core.size());
    std::vector<int> core_id(static_cast<std::size_t>(n), -1);
    for (int i = 0; i < k; ++i) core_id[static_cast<std::size_t>(core[static_cast<std::size_t>(i)])] = i;

    std::vector<double> pi(static_cast<std::size_t>(n), 0.0);
    const auto publish = [&]() {
        if (!warm_global) return;
        warm_global->assign(chain.id_of.size(), 0.0);
        for (int v = 0; v < n; ++v)
            (*warm_global)[chain.states[static_cast<std::size_t>(v)]] = pi[static_cast<std::size_t>(v)];
    };
    if (k == 1) {
        pi[static_cast<std::size_t>(core[0])] = 1.0;
        publish();
        return pi;
    }
    if (static_cast<std::size_t>(k) <= lu_limit) {
        // Solve (P^T - I) x = 0 with the last equation replaced by sum = 1.
        using Trip = Eigen::Triplet<double>;
        std::vector<Trip> trips;
        for (int i = 0; i < k; ++i) {
            const int v = core[static_cast<std::size_t>(i)];
            for (const auto& [w, p] : chain.rows[static_cast<std::size_t>(v)]) {
                const int jj = core_id[static_cast<std::size_t>(w)];
                if (jj != k - 1) trips.emplace_back(jj, i, p);  // P^T entry
            }
            if (i != k - 1) trips.emplace_back(i, i, -1.0);
            trips.emplace_back(k - 1, i, 1.0);  // normalization row
        }
        Eigen::SparseMatrix<double> A(k, k);
        A.setFromTriplets(trips.begin(), trips.end());
        A.makeCompressed();
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.analyzePattern(A);
        lu.factorize(A);
        if (lu.info() != Eigen::Success)
            throw SolveError("stationary solve: sparse LU factorization failed");
        Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
        b(k - 1) = 1.0;
        Eigen::VectorXd x = lu.solve(b);
        double total = 0.0;
        for (int i = 0; i < k; ++i) total += std::max(0.0, x(i));
        if (!(total > 0.0)) throw SolveError("stationary solve: degenerate solution");
        for (int i = 0; i < k; ++i)
            pi[static_cast<std::size_t>(core[static_cast<std::size_t>(i)])] = std::max(0.0, x(i)) / total;
        publish();
        return pi;
    }
    // Damped power iteration on (P + I)/2, which kills periodicity.
    std::vector<double> x(static_cast<std::size_t>(k), 1.0 / static_cast<double>(k));
    if (warm_global && warm_global->size() == chain.id_of.size()) {
        double mass = 0.0;
        for (int i = 0; i < k; ++i)
            mass += (*warm_global)[chain.states[static_cast<std::size_t>(core[static_cast<std::size_t>(i)])]];
        if (mass > 1e-6)
            for (int i = 0; i < k; ++i)
                x[static_cast<std::size_t>(i)] =
                    (*warm_global)[chain.states[static_cast<std::size_t>(core[static_cast<std::size_t>(i)])]] / mass;
    }
    std::vector<double> y(static_cast<std::size_t>(k));
    for (std::int64_t it = 0; it < 1'000'000; ++it) {
        std::fill(y.begin(), y.end(), 0.0);
        for (int i = 0; i < k; ++i) {
            const int v = core[static_cast<std::size_t>(i)];
            const double xi = x[static_cast<std::size_t>(i)];
            y[static_cast<std::size_t>(i)] += 0.5 * xi;
            for (const auto& [w, p] : chain.rows[static_cast<std::size_t>(v)])
                y[static_cast<std::size_t>(core_id[static_cast<std::size_t>(w)])] += 0.5 * p * xi;
        }
        double drift = 0.0;
        for (int i = 0; i < k; ++i) drift += std::abs(y[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(i)]);
        x.swap(y);
        if (drift <= drift_tol) {
            for (int i = 0; i < k; ++i)
                pi[static_cast<std::size_t>(core[static_cast<std::size_t>(i)])] = x[static_cast<std::size_t>(i)];
            publish();
            return pi;
        }
    }
    throw SolveError("stationary solve: power iteration did not converge");
}

template <typename MixFn>
std::pair<double, double> evaluate_mix(const StateSpace& space, const EnvConfig& cfg, MixFn&& mix_of,
                                       std::vector<double>* warm_global = nullptr,
                                       double drift_tol = 1e-12) {
    const ReachableChain chain = build_chain(space, cfg, std::forward<MixFn>(mix_of));
    const std::vector<double> pi = stationary_distribution(chain, 50'000, warm_global, drift_tol);
    double j_avg = 0.0, c_avg = 0.0;
    for (std::size_t i = 0; i < chain.states.size(); ++i) {
        j_avg += pi[i] * chain.age_cost[i];
        c_avg += pi[i] * chain.tx_prob[i];
    }
    return {j_avg, c_avg};
}

inline std::string policy_key(const DeterministicPolicy& p) {
    return std::string(reinterpret_cast<const char*>(p.action.data()), p.action.size());
}

// Per-state action support of a two-policy mixture.
inline ActionMix mixture_row(const MixturePolicy& policy, std::size_t s) {
    ActionMix mix;
    const int a_low = static_cast<int>(policy.low.action[s]);
    const int a_high = static_cast<int>(policy.high.action[s]);
    if (a_low == a_high) {
        mix.push_back({a_low, 1.0});
    } else {
        if (policy.mu > 0.0) mix.push_back({a_low, policy.mu});
        if (policy.mu < 1.0) mix.push_back({a_high, 1.0 - policy.mu});
    }
    return mix;
}

}  // namespace detail

// Long-run (weighted age, transmission rate) of a deterministic table
// policy on the age-capped chain, from the standard start state.  Raises
// SolveError when the induced chain has several closed classes.
inline std::pair<double, double> evaluate_policy(const DeterministicPolicy& policy,
                                                 const EnvConfig& cfg, const StateSpace& space) {
    return detail::evaluate_mix(space, cfg, [&](std::size_t s) {
        return detail::ActionMix{{static_cast<int>(policy.action[s]), 1.0}};
    });
}

inline std::pair<double, double> evaluate_policy(const MixturePolicy& policy, const EnvConfig& cfg,
                                                 const StateSpace& space) {
    if (!(policy.mu >= 0.0 && policy.mu <= 1.0))
        throw ValidationError("mixture weight must lie in [0, 1]");
    return detail::evaluate_mix(space, cfg,
                                [&](std::size_t s) { return detail::mixture_row(policy, s); });
}

inline std::pair<double, double> evaluate_policy(const DeterministicPolicy& policy,
                                                 const EnvConfig& cfg) {
    return evaluate_policy(policy, cfg, StateSpace(cfg));
}

inline std::pair<double, double> evaluate_policy(const MixturePolicy& policy, const EnvConfig& cfg) {
    return evaluate_policy(policy, cfg, StateSpace(cfg));
}

// ---------------------------------------------------------------------------
// Relative value iteration.

// Solves the average-cost problem for a fixed eta.  Stops once the span of
// T(h) - h is within `tol`; the returned residual is the verified sup-norm
// Bellman defect of (gain, h, policy), which the span bound dominates.
// The greedy policy's stationary (J, C) are filled through `cache` when one
// is supplied.
inline SolveResult rvi(const LagrangianProblem& problem, const RviOptions& opts = {},
                       PolicyEvalCache* cache = nullptr) {
    problem.env.validate();
    if (!(problem.eta >= 0.0))
        throw ValidationError("rvi: eta must be >= 0");
    if (!(opts.tol > 0.0))
        throw ValidationError("rvi: tol must be positive");
    if (opts.max_sweeps < 1)
        throw ValidationError("rvi: max_sweeps must be >= 1");
    if (!(opts.relaxation > 0.0 && opts.relaxation <= 1.0))
        throw ValidationError("rvi: relaxation must lie in (0, 1]");
    const StateSpace space(problem.env, opts.state_ceiling);
    const std::size_t n = space.size();
    const std::size_t ref = space.index_of(initial_state(problem.env));

    std::vector<double> h;
    if (opts.warm_start) {
        if (opts.warm_start->size() != n)
            throw ValidationError("rvi: warm start has wrong dimension");
        h = *opts.warm_start;
        const double shift = h[ref];
        for (double& v : h) v -= shift;  // restore h(s_0) == 0
    } else {
        h.assign(n, 0.0);
    }
    std::vector<double> th(n, 0.0);
    std::vector<std::uint8_t> greedy(n, 0);

    SolveResult res;
    for (std::int64_t sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
        const detail::SweepStats st =
            detail::bellman_sweep(space, problem.env, problem.eta, h, ref, th, greedy);
        const double span = st.diff_max - st.diff_min;
        res.sweeps = sweep;
        if (span <= opts.tol) {
            res.gain = st.diff_ref;  // T(h)(s_0) with h(s_0) == 0
            res.residual = std::max(st.diff_max - st.diff_ref, st.diff_ref - st.diff_min);
            res.h = std::move(h);
            res.policy.action = std::move(greedy);
            if (!opts.evaluate) {
                res.avg_age = std::numeric_limits<double>::quiet_NaN();
                res.avg_tx = std::numeric_limits<double>::quiet_NaN();
                return res;
            }
            if (cache) {
                const std::string key = detail::policy_key(res.policy);
                auto it = cache->jc.find(key);
                if (it == cache->jc.end()) {
                    const auto jc = detail::evaluate_mix(
                        space, problem.env,
                        [&](std::size_t s) {
                            return detail::ActionMix{{static_cast<int>(res.policy.action[s]), 1.0}};
                        },
                        &cache->warm_pi, cache->drift_tol);
                    it = cache->jc.emplace(key, jc).first;
                }
                res.avg_age = it->second.first;
                res.avg_tx = it->second.second;
            } else {
                std::tie(res.avg_age, res.avg_tx) = evaluate_policy(res.policy, problem.env, space);
            }
            return res;
        }
        // h <- (1 - w) h + w T(h), re-anchored at h(s_0) == 0; the anchor
        // contribution is w * T(h)(s_0) since h(s_0) == 0.
        const double w = opts.relaxation;
        const double shift = w * st.diff_ref;
        if (w == 1.0) {
            for (std::size_t i = 0; i < n; ++i) h[i] = th[i] - shift;
        } else {
            for (std::size_t i = 0; i < n; ++i) h[i] = (1.0 - w) * h[i] + w * th[i] - shift;
        }
        if (sweep == opts.max_sweeps) {
            res.gain = st.diff_ref;
            res.residual = std::max(st.diff_max - st.diff_ref, st.diff_ref - st.diff_min);
            res.h = std::move(h);
            res.policy.action = std::move(greedy);
            res.converged = false;
            res.avg_age = std::numeric_limits<double>::quiet_NaN();
            res.avg_tx = std::numeric_limits<double>::quiet_NaN();
            throw RviBudgetError("rvi: span not within " + std::to_string(opts.tol) + " after " +
                                     std::to_string(opts.max_sweeps) +
                                     " sweeps (eta=" + std::to_string(problem.eta) + ")",
                                 std::move(res));
        }
    }
    throw SolveError("rvi: unreachable sweep-loop exit");
}

// ---------------------------------------------------------------------------
// Dual ascent on the transmission price.

struct DualPoint {
    int iter = 0;
    double eta = 0.0;
    double gain = 0.0;
    double avg_age = 0.0;
    double avg_tx = 0.0;
};

struct DualAscentOptions {
    double eta0 = 0.0;
    double eps = 1e-3;   // stop when |eta_{m+1} - eta_m| < eps
    int max_iters = 500;
    RviOptions rvi;
};

struct DualAscentResult {
    double eta_star = 0.0;
    int iters = 0;
    std::vector<DualPoint> trace;
    SolveResult at_eta_star;  // fresh solve at the final price
};

// Thrown when the ascent runs out of iterations before its step drops below
// eps.  Carries everything computed so far (trace plus a fresh solve at the
// last price) so callers can audit the climb or resume from its endpoint.
struct DualAscentBudgetError : SolveError {
    DualAscentResult partial;
    DualAscentBudgetError(const std::string& what, DualAscentResult r)
        : SolveError(what), partial(std::move(r)) {}
};

namespace detail {

// Scoped loosening of the iterative-evaluation drift tolerance.  During a
// price search a few stray 1e-9s in the rate cannot move the iterates, so the
// evaluations run loose and full precision is left to the refinement stage.
// Small chains solve directly and never see this knob.
struct DriftGuard {
    PolicyEvalCache* c;
    double saved;
    explicit DriftGuard(PolicyEvalCache* cache) : c(cache), saved(cache->drift_tol) {
        c->drift_tol = std::max(saved, 1e-9);
    }
    ~DriftGuard() { c->drift_tol = saved; }
};

// Two-deep (eta, h) history for warm-starting priced solves.  Between policy
// changes h is affine in eta, so the secant through the last two solves is an
// almost exact predictor for nearby prices (extrapolated or interpolated);
// far jumps fall back to plain reuse of the latest h.
class SecantWarm {
  public:
    void push(double eta, std::vector<double>&& h) {
        h2_ = std::move(h1_);
        eta2_ = eta1_;
        h1_ = std::move(h);
        eta1_ = eta;
    }
    const std::vector<double>* propose(double eta) {
        if (h1_.empty()) return nullptr;
        if (!h2_.empty() && std::abs(eta1_ - eta2_) > 1e-12) {
            const double t = (eta - eta1_) / (eta1_ - eta2_);
            if (std::abs(t) <= 4.0) {
                warm_.resize(h1_.size());
                for (std::size_t i = 0; i < h1_.size(); ++i)
                    warm_[i] = h1_[i] + t * (h1_[i] - h2_[i]);
                return &warm_;
            }
        }
        return &h1_;
    }

  private:
    std::vector<double> h1_, h2_, warm_;
    double eta1_ = 0.0, eta2_ = 0.0;
};

}  // namespace detail

// Projected subgradient ascent  eta <- max(0, eta + (C_eta - lambda)/sqrt(m)).
// Each iterate solves the priced problem (warm-started from the previous h)
// and reads the greedy policy's stationary rate through the shared cache.
inline DualAscentResult dual_ascent(const EnvConfig& cfg, const DualAscentOptions& opts = {},
                                    PolicyEvalCache* cache = nullptr) {
    cfg.validate();
    if (!(opts.eta0 >= 0.0)) throw ValidationError("dual ascent: eta0 must be >= 0");
    if (!(opts.eps > 0.0)) throw ValidationError("dual ascent: eps must be positive");
    PolicyEvalCache local_cache;
    if (!cache) cache = &local_cache;
    detail::DriftGuard guard(cache);

    DualAscentResult out;
    double eta = opts.eta0;
    detail::SecantWarm warm;
    bool converged = false;
    for (int m = 1; m <= opts.max_iters; ++m) {
        RviOptions ropts = opts.rvi;
        ropts.evaluate = true;  // the step needs the exact stationary rate
        ropts.warm_start = warm.propose(eta);
        SolveResult sol = rvi({cfg, eta}, ropts, cache);
        out.trace.push_back({m, eta, sol.gain, sol.avg_age, sol.avg_tx});
        const double next =
            std::max(0.0, eta + (sol.avg_tx - cfg.lambda) / std::sqrt(static_cast<double>(m)));
        warm.push(eta, std::move(sol.h));
        out.iters = m;
        const bool small_step = std::abs(next - eta) < opts.eps;
        eta = next;
        if (small_step) {
            converged = true;
            break;
        }
    }
    out.eta_star = eta;
    cache->drift_tol = guard.saved;
    RviOptions final_opts = opts.rvi;
    final_opts.warm_start = warm.propose(eta);
    out.at_eta_star = rvi({cfg, eta}, final_opts, cache);
    if (converged) return out;
    throw DualAscentBudgetError(
        "dual ascent: step size still above " + std::to_string(opts.eps) + " after " +
            std::to_string(opts.max_iters) + " iterations (last eta=" + std::to_string(eta) + ")",
        std::move(out));
}

// ---------------------------------------------------------------------------
// Constraint-meeting mixture of two priced policies.

// Linear-interpolation weight putting mu on the looser-priced (higher-rate)
// policy:  mu * c_low + (1 - mu) * c_high = lambda.  Degenerate brackets
// (c_low == c_high) resolve to mu = 1; out-of-bracket targets clamp to the
// nearer endpoint and set *clamped.
inline double mixture_weight(double c_low, double c_high, double lambda, bool* clamped = nullptr) {
    if (clamped) *clamped = false;
    if (std::abs(c_low - c_high) < 1e-12) return 1.0;
    double mu = (lambda - c_high) / (c_low - c_high);
    if (mu < 0.0 || mu > 1.0) {
        if (clamped) *clamped = true;
        mu = std::clamp(mu, 0.0, 1.0);
    }
    return mu;
}

struct MixtureBuild {
    MixturePolicy policy;
    double eta1 = 0.0, eta2 = 0.0;   // bracket prices (eta1 <= eta_star <= eta2)
    double c_low = 0.0, c_high = 0.0;  // stationary rates of the bracket policies
    double j_low = 0.0, j_high = 0.0;
    bool clamped = false;
    bool degenerate = false;
};

// Brackets eta_star with eta1 = max(0, eta_star - xi), eta2 = eta_star + xi
// (xi <= 0 picks 0.05 * max(eta_star, 1)) and mixes the two greedy policies
// so the interpolated rate hits lambda.
inline MixtureBuild build_mixture(const EnvConfig& cfg, double eta_star, double xi = -1.0,
                                  const RviOptions& rvi_opts = {}, PolicyEvalCache* cache = nullptr) {
    cfg.validate();
    if (!(eta_star >= 0.0)) throw ValidationError("mixture: eta_star must be >= 0");
    if (xi <= 0.0) xi = 0.05 * std::max(eta_star, 1.0);
    MixtureBuild out;
    out.eta1 = std::max(0.0, eta_star - xi);
    out.eta2 = eta_star + xi;
    RviOptions eval_opts = rvi_opts;
    eval_opts.evaluate = true;  // the bracket is defined by exact stationary rates
    SolveResult low = rvi({cfg, out.eta1}, eval_opts, cache);
    RviOptions warm_opts = eval_opts;
    warm_opts.warm_start = &low.h;
    SolveResult high = rvi({cfg, out.eta2}, warm_opts, cache);
    out.c_low = low.avg_tx;
    out.c_high = high.avg_tx;
    out.j_low = low.avg_age;
    out.j_high = high.avg_age;
    out.degenerate = std::abs(out.c_low - out.c_high) < 1e-12;
    out.policy.low = std::move(low.policy);
    out.policy.high = std::move(high.policy);
    out.policy.mu = mixture_weight(out.c_low, out.c_high, cfg.lambda, &out.clamped);
    return out;
}

// Tightens the mixture weight by bisecting on the *exact* stationary rate
// of the randomized chain (per-slot mixing makes it nonlinear in mu).
// Returns the achieved (J, C); if lambda is outside [C(0), C(1)] the weight
// stays at the nearer endpoint.
inline std::pair<double, double> refine_mixture_weight(MixturePolicy& mix, const EnvConfig& cfg,
                                                       const StateSpace& space, double tol = 0.01,
                                                       int max_iters = 60) {
    std::vector<double> warm;  // successive weights induce nearby distributions
    auto rate_at = [&](double mu) {
        MixturePolicy probe = mix;
        probe.mu = mu;
        return detail::evaluate_mix(
            space, cfg, [&](std::size_t s) { return detail::mixture_row(probe, s); }, &warm);
    };
    auto at_lo = rate_at(0.0);   // all weight on `high` (fewer transmissions)
    auto at_hi = rate_at(1.0);   // all weight on `low`
    const double lambda = cfg.lambda;
    if (at_hi.second <= lambda + tol) { mix.mu = 1.0; return at_hi; }
    if (at_lo.second >= lambda - tol) { mix.mu = 0.0; return at_lo; }
    double lo = 0.0, hi = 1.0;
    std::pair<double, double> best = at_lo;
    double best_mu = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        const double mid = 0.5 * (lo + hi);
        const auto val = rate_at(mid);
        if (std::abs(val.second - lambda) < std::abs(best.second - lambda)) {
            best = val;
            best_mu = mid;
        }
        if (std::abs(val.second - lambda) <= tol) break;
        (val.second > lambda ? hi : lo) = mid;
    }
    mix.mu = best_mu;
    return best;
}

// ---------------------------------------------------------------------------
// End-to-end constrained solve.

struct ConstrainedOptions {
    DualAscentOptions dual;
    double xi = -1.0;          // initial bracket half-width; <= 0 picks the default
    int max_widenings = 2;     // bracket doublings before falling back to bisection
    double bracket_tol = 1e-3;  // relative price resolution of the bisection fallback
    double refine_tol = 0.01;
    int refine_max_iters = 60;
};

struct ConstrainedSolution {
    DualAscentResult dual;
    MixtureBuild mixture;
    double j = 0.0;          // exact stationary weighted age of the final policy
    double c = 0.0;          // exact stationary transmission rate
    int widenings = 0;
    bool bisected = false;    // bracket came from the rate bisection fallback
    bool dual_capped = false;  // ascent spent its budget; search resumed from its last price
    bool matched = false;     // |c - lambda| within 0.01
    bool slack = false;       // budget not binding at price zero
};

// Price search, bracket, and rate-matched mixture in one call.  The sqrt-step
// ascent can stop mid-plateau while the greedy rate still sits away from the
// budget (its step shrinks below eps long before a wide plateau is crossed),
// so a bracket around the reported price need not straddle lambda.  The
// doublings handle the common near-miss; when they run out, the monotone
// exact rate C(eta) is bisected directly, which lands on two adjacent
// policies around the true crossing.
inline ConstrainedSolution solve_constrained(const EnvConfig& cfg,
                                             const ConstrainedOptions& opts = {},
                                             PolicyEvalCache* cache = nullptr) {
    cfg.validate();
    PolicyEvalCache local_cache;
    if (!cache) cache = &local_cache;

    ConstrainedSolution out;
    try {
        out.dual = dual_ascent(cfg, opts.dual, cache);
    } catch (const DualAscentBudgetError& err) {
        // A spent budget is not fatal here: the bracket search below only
        // needs a starting price and a warm h, both carried by the error.
        out.dual = err.partial;
        out.dual_capped = true;
    }
    const double eta_star = out.dual.eta_star;

    {
        // The whole bracket phase only steers the search, so its evaluations
        // may run at the loose search drift; the refinement below restores
        // full precision for the reported J and C.
        detail::DriftGuard bracket_guard(cache);

        RviOptions probe_opts = opts.dual.rvi;
        probe_opts.evaluate = true;
        std::vector<double> warm_h = out.dual.at_eta_star.h;
        probe_opts.warm_start = &warm_h;

        const auto straddles = [&]() {
            return out.mixture.c_high <= cfg.lambda + 1e-12 &&
                   out.mixture.c_low >= cfg.lambda - 1e-12;
        };
        double xi = opts.xi > 0.0 ? opts.xi : 0.05 * std::max(eta_star, 1.0);
        for (int k = 0;; ++k) {
            out.mixture = build_mixture(cfg, eta_star, xi, probe_opts, cache);
            out.widenings = k;
            const bool low_can_drop =
                out.mixture.c_low < cfg.lambda - 1e-12 && out.mixture.eta1 > 0.0;
            const bool high_can_rise = out.mixture.c_high > cfg.lambda + 1e-12;
            if (straddles() || !(low_can_drop || high_can_rise) || k >= opts.max_widenings) break;
            xi *= 2.0;
        }

        if (!straddles() && out.mixture.c_high > cfg.lambda + 1e-12) {
            // Both bracket policies over budget: hunt upward for a price
            // whose greedy policy is under it, then bisect the crossing down
            // to two near-adjacent policies around it.
            out.bisected = true;
            detail::SecantWarm warm;
            warm.push(eta_star, std::move(warm_h));
            const auto priced = [&](double eta_val) {
                RviOptions hunt_opts = opts.dual.rvi;
                hunt_opts.evaluate = true;
                hunt_opts.warm_start = warm.propose(eta_val);
                SolveResult sol = rvi({cfg, eta_val}, hunt_opts, cache);
                warm.push(eta_val, std::move(sol.h));
                return sol;
            };
            double lo = out.mixture.eta2;
            SolveResult lo_sol = priced(lo);
            double hi = std::max(2.0 * lo, 1.0);
            SolveResult hi_sol;
            for (int k = 0;; ++k) {
                hi_sol = priced(hi);
                if (hi_sol.avg_tx <= cfg.lambda) break;
                if (k >= 60)
                    throw SolveError("constrained solve: no price found with rate <= " +
                                     std::to_string(cfg.lambda));
                lo = hi;
                lo_sol = hi_sol;
                hi *= 2.0;
            }
            for (int k = 0; k < 60 && hi - lo > opts.bracket_tol * std::max(1.0, hi); ++k) {
                const double mid = 0.5 * (lo + hi);
                SolveResult mid_sol = priced(mid);
                if (mid_sol.avg_tx > cfg.lambda) {
                    lo = mid;
                    lo_sol = std::move(mid_sol);
                } else {
                    hi = mid;
                    hi_sol = std::move(mid_sol);
                }
            }
            out.mixture.eta1 = lo;
            out.mixture.eta2 = hi;
            out.mixture.c_low = lo_sol.avg_tx;
            out.mixture.c_high = hi_sol.avg_tx;
            out.mixture.j_low = lo_sol.avg_age;
            out.mixture.j_high = hi_sol.avg_age;
            out.mixture.degenerate = std::abs(out.mixture.c_low - out.mixture.c_high) < 1e-12;
            out.mixture.policy.low = std::move(lo_sol.policy);
            out.mixture.policy.high = std::move(hi_sol.policy);
            out.mixture.policy.mu = mixture_weight(out.mixture.c_low, out.mixture.c_high,
                                                   cfg.lambda, &out.mixture.clamped);
        }
    }

    const StateSpace space(cfg, opts.dual.rvi.state_ceiling);
    std::tie(out.j, out.c) =
        refine_mixture_weight(out.mixture.policy, cfg, space, opts.refine_tol, opts.refine_max_iters);
    out.matched = std::abs(out.c - cfg.lambda) <= 0.01;
    out.slack = !out.matched && out.c < cfg.lambda && out.mixture.policy.mu >= 1.0 &&
                out.mixture.eta1 == 0.0;
    return out;
}

}  // namespace aoi
