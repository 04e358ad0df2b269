#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

// Core value types shared by every layer: the scheduling environment's
// configuration, system states, actions, and the error hierarchy.
//
// Conventions used throughout:
//   - users are indexed 0..M-1 internally; human-facing text is 1-based
//   - ages (delta) are >= 1, retransmission counters (r) are >= 0
//   - a channel's error curve g(r) is the probability a transmission with
//     r prior failed attempts is lost; ARQ only ever uses g(0)

namespace aoi {

// Raised when inputs violate a documented precondition (bad config, bad
// arguments).  The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a numeric procedure fails to meet its contract (iteration
// budget exhausted, chain not unichain, ...).  The CLI maps this to exit
// code 2.
class SolveError : public std::runtime_error {
public:
    explicit SolveError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a simulation cannot proceed (an agent returned an action that
// is infeasible in the current state).
class RolloutError : public std::runtime_error {
public:
    explicit RolloutError(const std::string& what) : std::runtime_error(what) {}
};

enum class Protocol : std::uint8_t {
    Arq,   // failed packets are dropped; every transmission is a fresh one
    Harq,  // failed packets may be retransmitted with combining (error decays in r)
};

inline const char* to_string(Protocol p) {
    return p == Protocol::Arq ? "arq" : "harq";
}

// One user's downlink: a per-retransmission error curve and an age weight.
struct UserChannel {
    std::vector<double> error_curve;  // g(0), g(1), ..., g(r_max)
    double weight = 1.0;

    double g(int r) const { return error_curve.at(static_cast<std::size_t>(r)); }
};

// Full environment description.  `r_max` is the retransmission cap; under
// ARQ it must be 0 (the counter never leaves 0).  `delta_max` is the age
// ceiling used when the state space is truncated for planning; simulation
// itself runs uncapped.  `lambda` is the allowed long-run transmission
// rate.
struct EnvConfig {
    Protocol protocol = Protocol::Arq;
    std::vector<UserChannel> channels;
    int r_max = 0;
    int delta_max = 100;
    double lambda = 1.0;

    int users() const { return static_cast<int>(channels.size()); }
    double weight(int j) const { return channels[static_cast<std::size_t>(j)].weight; }
    double error_prob(int j, int r) const { return channels[static_cast<std::size_t>(j)].g(r); }

    void validate() const;
};

// Scheduler state: one (age, retransmission counter) pair per user.
struct SystemState {
    std::vector<int> age;   // delta_j >= 1
    std::vector<int> retx;  // r_j in [0, r_max]; always 0 under ARQ

    int users() const { return static_cast<int>(age.size()); }
    bool operator==(const SystemState&) const = default;
};

enum class ActionKind : std::uint8_t { Idle, NewPacket, Retransmit };

// One of 2M+1 scheduling choices: stay silent, send a fresh packet to some
// user, or retransmit that user's last failed packet.
struct Action {
    ActionKind kind = ActionKind::Idle;
    int user = -1;  // 0-based target; -1 for Idle

    static Action idle() { return {ActionKind::Idle, -1}; }
    static Action new_packet(int user) { return {ActionKind::NewPacket, user}; }
    static Action retransmit(int user) { return {ActionKind::Retransmit, user}; }

    bool is_transmit() const { return kind != ActionKind::Idle; }
    bool operator==(const Action&) const = default;
};

// Canonical dense numbering used for tie-breaking and table lookups:
// 0 = idle, 1..M = new packet to user 1..M, M+1..2M = retransmit to user
// 1..M.  Lower id wins ties everywhere.
inline int action_id(const Action& a, int users) {
    switch (a.kind) {
    case ActionKind::Idle: return 0;
    case ActionKind::NewPacket: return 1 + a.user;
    case ActionKind::Retransmit: return 1 + users + a.user;
    }
    return 0;  // unreachable
}

inline Action action_from_id(int id, int users) {
    if (id == 0) return Action::idle();
    if (id <= users) return Action::new_packet(id - 1);
    return Action::retransmit(id - 1 - users);
}

inline int action_count(int users) { return 2 * users + 1; }

inline std::string to_string(const Action& a) {
    switch (a.kind) {
    case ActionKind::Idle: return "idle";
    case ActionKind::NewPacket: return "new(" + std::to_string(a.user + 1) + ")";
    case ActionKind::Retransmit: return "retx(" + std::to_string(a.user + 1) + ")";
    }
    return "?";
}

inline std::string to_string(const SystemState& s) {
    std::ostringstream out;
    out << "(";
    for (int j = 0; j < s.users(); ++j) {
        if (j) out << ", ";
        out << "d" << (j + 1) << "=" << s.age[static_cast<std::size_t>(j)]
            << " r" << (j + 1) << "=" << s.retx[static_cast<std::size_t>(j)];
    }
    out << ")";
    return out.str();
}

inline void EnvConfig::validate() const {
    if (channels.empty()) throw ValidationError("env: need at least one user");
    if (protocol == Protocol::Arq && r_max != 0)
        throw ValidationError("env: r_max must be 0 under ARQ (counter never leaves 0)");
    if (protocol == Protocol::Harq && r_max < 1)
        throw ValidationError("env: r_max must be >= 1 under HARQ");
    if (delta_max < users())
        throw ValidationError("env: delta_max must be >= number of users (initial ages are 1..M)");
    if (delta_max <= r_max)
        throw ValidationError("env: delta_max must exceed r_max (ages always outrun retransmission counts)");
    if (!(lambda > 0.0) || lambda > 1.0)
        throw ValidationError("env: lambda must lie in (0, 1]");
    for (int j = 0; j < users(); ++j) {
        const UserChannel& ch = channels[static_cast<std::size_t>(j)];
        if (static_cast<int>(ch.error_curve.size()) != r_max + 1)
            throw ValidationError("env: user " + std::to_string(j + 1) +
                                  " error curve must have r_max+1 entries");
        for (double g : ch.error_curve)
            if (!(g >= 0.0 && g <= 1.0))
                throw ValidationError("env: user " + std::to_string(j + 1) +
                                      " error probabilities must lie in [0, 1]");
        for (std::size_t r = 1; r < ch.error_curve.size(); ++r)
            if (ch.error_curve[r] > ch.error_curve[r - 1])
                throw ValidationError("env: user " + std::to_string(j + 1) +
                                      " error curve must be non-increasing in r");
        if (!(ch.weight > 0.0))
            throw ValidationError("env: user " + std::to_string(j + 1) +
                                  " weight must be positive");
    }
}

}  // namespace aoi
