#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "aoi/types.hpp"

// Non-learning schedulers and the closed-form performance floor they are
// measured against.  All of these are stated for the ARQ protocol (per-user
// scalar error probability p_j) and always send fresh packets.

namespace aoi {

struct LowerBoundResult {
    double value = 0.0;
    int j_star = 0;  // 0-based index of the argmin user in the cross term
};

// Closed-form floor on the long-run weighted age of any scheduler meeting
// the rate budget:
//   J_LB = (1/2λ)(Σ_j √(w_j/(1−p_j)))²
//        + λ·w_{j*}·p_{j*}/(2(1−p_{j*}))
//        + (1/2)Σ_j w_j,
// where j* minimizes w_j·p_j/(2(1−p_j)) (ties to the lowest j).
inline LowerBoundResult lower_bound(const EnvConfig& cfg) {
    cfg.validate();
    if (cfg.protocol != Protocol::Arq)
        throw ValidationError("lower bound: stated for the ARQ protocol only");
    for (int j = 0; j < cfg.users(); ++j)
        if (cfg.error_prob(j, 0) >= 1.0)
            throw ValidationError("lower bound: requires p_j < 1 for every user");

    double root_sum = 0.0, weight_sum = 0.0;
    double cross_min = std::numeric_limits<double>::infinity();
    int j_star = 0;
    for (int j = 0; j < cfg.users(); ++j) {
        const double w = cfg.weight(j);
        const double p = cfg.error_prob(j, 0);
        root_sum += std::sqrt(w / (1.0 - p));
        weight_sum += w;
        const double cross = w * p / (2.0 * (1.0 - p));
        if (cross < cross_min) {
            cross_min = cross;
            j_star = j;
        }
    }
    LowerBoundResult out;
    out.j_star = j_star;
    out.value = root_sum * root_sum / (2.0 * cfg.lambda) + cfg.lambda * cross_min + 0.5 * weight_sum;
    return out;
}

// Per-user data the index policy works from; `error_probs` may be true
// values (known-channel baseline) or optimistic estimates (learning).
struct WhittleContext {
    std::vector<double> error_probs;
    std::vector<double> weights;
    double eta = 0.0;

    int users() const { return static_cast<int>(error_probs.size()); }
};

// Index of one user at age delta:  w(1−p)·δ·(δ + (1+p)/(1−p)).  Strictly
// increasing in delta; undefined at p = 1.
inline double whittle_index(int delta, const WhittleContext& ctx, int user) {
    const double p = ctx.error_probs[static_cast<std::size_t>(user)];
    const double w = ctx.weights[static_cast<std::size_t>(user)];
    if (p >= 1.0) throw ValidationError("whittle index: requires p < 1");
    if (delta < 1) throw ValidationError("whittle index: age must be >= 1");
    const double d = static_cast<double>(delta);
    return w * (1.0 - p) * d * (d + (1.0 + p) / (1.0 - p));
}

// Transmit a fresh packet to the highest-index user when that index beats
// the price eta, else idle.  Ties go to the lowest user.
inline Action whittle_action(const SystemState& s, const WhittleContext& ctx) {
    int best = 0;
    double best_index = -1.0;
    for (int j = 0; j < ctx.users(); ++j) {
        const double idx = whittle_index(s.age[static_cast<std::size_t>(j)], ctx, j);
        if (idx > best_index) {
            best_index = idx;
            best = j;
        }
    }
    return best_index > ctx.eta ? Action::new_packet(best) : Action::idle();
}

// Always transmit to the user with the highest weighted age (ties to the
// lowest user).  Reduces to the classic max-age rule at uniform weights.
inline Action greedy_action(const SystemState& s, std::span<const double> weights) {
    int best = 0;
    double best_score = -1.0;
    for (int j = 0; j < s.users(); ++j) {
        const double score = weights[static_cast<std::size_t>(j)] *
                             static_cast<double>(s.age[static_cast<std::size_t>(j)]);
        if (score > best_score) {
            best_score = score;
            best = j;
        }
    }
    return Action::new_packet(best);
}

// Serve users cyclically: slot t (counting from 0) goes to user t mod M.
inline Action round_robin_action(std::uint64_t t, int users) {
    return Action::new_packet(static_cast<int>(t % static_cast<std::uint64_t>(users)));
}

}  // namespace aoi
