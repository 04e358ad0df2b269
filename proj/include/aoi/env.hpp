#pragma once

#include <algorithm>
#include <vector>

#include "aoi/rng.hpp"
#include "aoi/types.hpp"

// Single-slot dynamics of the scheduling chain.
//
// Each slot the scheduler either idles or transmits to exactly one user.
// Every user's age rises by one except a user whose transmission was
// delivered, whose age resets to the age of the delivered packet (1 for a
// fresh packet, r for a packet that sat through r failed attempts).  The
// per-slot cost pair is (weighted age of the *current* state, 1 if the
// action transmits).

namespace aoi {

// Whether successor ages are clamped at cfg.delta_max.  Planning works on
// the clamped chain; simulation runs unclamped so empirical averages are
// not biased by the truncation.
enum class AgeCap : std::uint8_t { None, DeltaMax };

inline SystemState initial_state(const EnvConfig& cfg) {
    cfg.validate();
    SystemState s;
    s.age.resize(static_cast<std::size_t>(cfg.users()));
    s.retx.assign(static_cast<std::size_t>(cfg.users()), 0);
    for (int j = 0; j < cfg.users(); ++j) s.age[static_cast<std::size_t>(j)] = j + 1;
    return s;
}

// Weighted age of the state: sum_j w_j * delta_j.
inline double age_cost(const SystemState& s, const EnvConfig& cfg) {
    double total = 0.0;
    for (int j = 0; j < cfg.users(); ++j)
        total += cfg.weight(j) * static_cast<double>(s.age[static_cast<std::size_t>(j)]);
    return total;
}

// A retransmission needs an outstanding failed packet (r >= 1) and room
// for another failure under the cap (r < r_max); it only exists under HARQ.
inline bool is_feasible(const Action& a, const SystemState& s, const EnvConfig& cfg) {
    switch (a.kind) {
    case ActionKind::Idle:
        return true;
    case ActionKind::NewPacket:
        return a.user >= 0 && a.user < cfg.users();
    case ActionKind::Retransmit: {
        if (cfg.protocol != Protocol::Harq) return false;
        if (a.user < 0 || a.user >= cfg.users()) return false;
        const int r = s.retx[static_cast<std::size_t>(a.user)];
        return r >= 1 && r < cfg.r_max;
    }
    }
    return false;
}

// All feasible actions in canonical order: idle, new(1..M), retx(1..M).
inline std::vector<Action> feasible_actions(const SystemState& s, const EnvConfig& cfg) {
    std::vector<Action> out;
    out.reserve(static_cast<std::size_t>(action_count(cfg.users())));
    out.push_back(Action::idle());
    for (int j = 0; j < cfg.users(); ++j) out.push_back(Action::new_packet(j));
    for (int j = 0; j < cfg.users(); ++j) {
        Action a = Action::retransmit(j);
        if (is_feasible(a, s, cfg)) out.push_back(a);
    }
    return out;
}

namespace detail {

inline int capped_bump(int delta, const EnvConfig& cfg, AgeCap cap) {
    const int next = delta + 1;
    return cap == AgeCap::DeltaMax ? std::min(next, cfg.delta_max) : next;
}

// Successor when every user just ages (idle, or the transmission branch is
// applied on top of this).
inline SystemState aged_copy(const SystemState& s, const EnvConfig& cfg, AgeCap cap) {
    SystemState next = s;
    for (int& d : next.age) d = capped_bump(d, cfg, cap);
    return next;
}

}  // namespace detail

struct Outcome {
    SystemState state;
    double prob;
};

// Exact successor distribution of (s, a).  Zero-probability branches are
// dropped and coinciding successors merged, so entries are distinct states
// with positive probabilities summing to 1.
inline std::vector<Outcome> transition_distribution(const SystemState& s, const Action& a,
                                                    const EnvConfig& cfg,
                                                    AgeCap cap = AgeCap::DeltaMax) {
    if (!is_feasible(a, s, cfg))
        throw ValidationError("transition: action " + to_string(a) + " infeasible in state " +
                              to_string(s));
    SystemState aged = detail::aged_copy(s, cfg, cap);
    if (a.kind == ActionKind::Idle) return {{std::move(aged), 1.0}};

    const std::size_t j = static_cast<std::size_t>(a.user);
    const int r = s.retx[j];
    const double g = a.kind == ActionKind::NewPacket ? cfg.error_prob(a.user, 0)
                                                     : cfg.error_prob(a.user, r);

    SystemState succ = aged;  // delivery branch
    if (a.kind == ActionKind::NewPacket) {
        succ.age[j] = 1;
        succ.retx[j] = 0;
    } else {
        succ.age[j] = r;  // the delivered packet is r slots old
        succ.retx[j] = 0;
    }

    SystemState fail = std::move(aged);  // loss branch: age already bumped
    if (cfg.protocol == Protocol::Harq)
        fail.retx[j] = a.kind == ActionKind::NewPacket ? 1 : r + 1;

    std::vector<Outcome> out;
    if (1.0 - g > 0.0) out.push_back({std::move(succ), 1.0 - g});
    if (g > 0.0) {
        if (!out.empty() && out.front().state == fail)
            out.front().prob = 1.0;  // truncation collapsed both branches
        else
            out.push_back({std::move(fail), g});
    }
    return out;
}

struct StepResult {
    SystemState next;
    double age_cost = 0.0;  // weighted age of the state the slot started in
    int tx_cost = 0;        // 1 iff the action transmitted
    bool delivered = false; // feedback bit; false whenever tx_cost == 0
};

// Samples one slot.  Exactly one uniform draw is consumed when the action
// transmits and none when it idles, which pins down the reproducibility
// contract.
inline StepResult step(const SystemState& s, const Action& a, const EnvConfig& cfg, Rng& rng,
                       AgeCap cap = AgeCap::None) {
    if (!is_feasible(a, s, cfg))
        throw ValidationError("step: action " + to_string(a) + " infeasible in state " +
                              to_string(s));
    StepResult res;
    res.age_cost = age_cost(s, cfg);
    res.next = detail::aged_copy(s, cfg, cap);
    if (a.kind == ActionKind::Idle) return res;

    res.tx_cost = 1;
    const std::size_t j = static_cast<std::size_t>(a.user);
    const int r = s.retx[j];
    const double g = a.kind == ActionKind::NewPacket ? cfg.error_prob(a.user, 0)
                                                     : cfg.error_prob(a.user, r);
    const bool lost = rng.bernoulli(g);
    res.delivered = !lost;
    if (!lost) {
        res.next.age[j] = a.kind == ActionKind::NewPacket ? 1 : r;
        res.next.retx[j] = 0;
    } else if (cfg.protocol == Protocol::Harq) {
        res.next.retx[j] = a.kind == ActionKind::NewPacket ? 1 : r + 1;
    }
    return res;
}

}  // namespace aoi
