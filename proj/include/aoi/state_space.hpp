#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "aoi/env.hpp"
#include "aoi/types.hpp"

// Dense enumeration of the age-capped state space used by the planners.
//
// Per user the local code is l = (delta - 1) + D * r with D = delta_max and
// r ranging over R levels (R = r_max + 1 under HARQ, R = 1 under ARQ, where
// the counter is pinned at 0).  Global indices are mixed-radix over users
// with user 0 varying fastest: index = sum_j l_j * (D*R)^j.
//
// The per-local successor tables below are shared by all users (the
// (delta, r) grid is identical for each), which keeps the planner's inner
// loop at a handful of array lookups per action.

namespace aoi {

class StateSpace {
public:
    explicit StateSpace(const EnvConfig& cfg,
                        std::size_t max_states = std::numeric_limits<std::size_t>::max())
        : users_(cfg.users()),
          age_cap_(cfg.delta_max),
          retx_levels_(cfg.protocol == Protocol::Harq ? cfg.r_max + 1 : 1) {
        cfg.validate();
        local_dim_ = static_cast<std::size_t>(age_cap_) * static_cast<std::size_t>(retx_levels_);
        size_ = 1;
        strides_.resize(static_cast<std::size_t>(users_));
        for (int j = 0; j < users_; ++j) {
            strides_[static_cast<std::size_t>(j)] = size_;
            if (size_ > max_states / local_dim_)
                throw ValidationError("state space exceeds ceiling of " +
                                      std::to_string(max_states) + " states");
            size_ *= local_dim_;
        }

        aged_.resize(local_dim_);
        new_fail_.resize(local_dim_);
        retx_succ_.resize(local_dim_);
        retx_fail_.resize(local_dim_);
        retx_ok_.resize(local_dim_);
        const int fresh_fail_r = cfg.protocol == Protocol::Harq ? 1 : 0;
        for (int r = 0; r < retx_levels_; ++r) {
            for (int d = 1; d <= age_cap_; ++d) {
                const std::size_t l = local_code(d, r);
                const int bumped = std::min(d + 1, age_cap_);
                aged_[l] = local_code(bumped, r);
                new_fail_[l] = local_code(bumped, fresh_fail_r);
                retx_ok_[l] = cfg.protocol == Protocol::Harq && r >= 1 && r < cfg.r_max;
                if (retx_ok_[l]) {
                    retx_succ_[l] = local_code(r, 0);  // delivered packet is r old
                    retx_fail_[l] = local_code(bumped, r + 1);
                } else {
                    retx_succ_[l] = retx_fail_[l] = 0;
                }
            }
        }
    }

    std::size_t size() const { return size_; }
    int users() const { return users_; }
    int age_cap() const { return age_cap_; }
    int retx_levels() const { return retx_levels_; }
    std::size_t local_dim() const { return local_dim_; }
    std::size_t stride(int j) const { return strides_[static_cast<std::size_t>(j)]; }

    std::size_t local_code(int delta, int r) const {
        return static_cast<std::size_t>(delta - 1) +
               static_cast<std::size_t>(age_cap_) * static_cast<std::size_t>(r);
    }
    int age_of_local(std::size_t l) const { return static_cast<int>(l % static_cast<std::size_t>(age_cap_)) + 1; }
    int retx_of_local(std::size_t l) const { return static_cast<int>(l / static_cast<std::size_t>(age_cap_)); }

    // Successor tables (see header comment).
    std::size_t aged_local(std::size_t l) const { return aged_[l]; }
    std::size_t new_fail_local(std::size_t l) const { return new_fail_[l]; }
    std::size_t retx_succ_local(std::size_t l) const { return retx_succ_[l]; }
    std::size_t retx_fail_local(std::size_t l) const { return retx_fail_[l]; }
    bool retx_allowed(std::size_t l) const { return retx_ok_[l]; }

    // Exact index; the state must already respect the age cap.
    std::size_t index_of(const SystemState& s) const {
        std::size_t idx = 0;
        for (int j = 0; j < users_; ++j) {
            const int d = s.age[static_cast<std::size_t>(j)];
            const int r = s.retx[static_cast<std::size_t>(j)];
            if (d < 1 || d > age_cap_ || r < 0 || r >= retx_levels_)
                throw ValidationError("state " + to_string(s) + " outside the enumerated space");
            idx += local_code(d, r) * stride(j);
        }
        return idx;
    }

    // Index of the state with ages clamped to the cap; total on all
    // (uncapped) states, used to key planner tables during simulation.
    std::size_t digest(const SystemState& s) const {
        std::size_t idx = 0;
        for (int j = 0; j < users_; ++j) {
            const int d = std::min(s.age[static_cast<std::size_t>(j)], age_cap_);
            const int r = s.retx[static_cast<std::size_t>(j)];
            idx += local_code(d, r) * stride(j);
        }
        return idx;
    }

    SystemState state_of(std::size_t idx) const {
        SystemState s;
        s.age.resize(static_cast<std::size_t>(users_));
        s.retx.resize(static_cast<std::size_t>(users_));
        for (int j = 0; j < users_; ++j) {
            const std::size_t l = idx % local_dim_;
            idx /= local_dim_;
            s.age[static_cast<std::size_t>(j)] = age_of_local(l);
            s.retx[static_cast<std::size_t>(j)] = retx_of_local(l);
        }
        return s;
    }

    std::size_t initial_index(const EnvConfig& cfg) const { return index_of(initial_state(cfg)); }

private:
    int users_;
    int age_cap_;
    int retx_levels_;
    std::size_t local_dim_ = 0;
    std::size_t size_ = 0;
    std::vector<std::size_t> strides_;
    std::vector<std::size_t> aged_, new_fail_, retx_succ_, retx_fail_;
    std::vector<char> retx_ok_;
};

}  // namespace aoi
