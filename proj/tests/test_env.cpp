#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "aoi/env.hpp"
#include "aoi/rng.hpp"
#include "aoi/state_space.hpp"
#include "aoi/types.hpp"

using namespace aoi;

namespace {

EnvConfig arq3() {
    EnvConfig cfg;
    cfg.channels = {{{0.5}, 1.0}, {{0.2}, 1.0}, {{0.1}, 1.0}};
    cfg.delta_max = 50;
    return cfg;
}

EnvConfig harq1() {
    EnvConfig cfg;
    cfg.protocol = Protocol::Harq;
    cfg.channels = {{{0.9, 0.5, 0.25, 0.1}, 1.0}};
    cfg.r_max = 3;
    cfg.delta_max = 20;
    return cfg;
}

SystemState make_state(std::vector<int> age, std::vector<int> retx) {
    return {std::move(age), std::move(retx)};
}

}  // namespace

TEST_CASE("config validation accepts the reference networks") {
    CHECK_NOTHROW(arq3().validate());
    CHECK_NOTHROW(harq1().validate());
}

TEST_CASE("config validation rejects malformed setups") {
    EnvConfig cfg = arq3();
    cfg.channels.clear();
    CHECK_THROWS_AS(cfg.validate(), ValidationError);  // no users

    cfg = arq3();
    cfg.r_max = 1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);  // ARQ has no retransmissions

    cfg = harq1();
    cfg.r_max = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);  // HARQ needs a positive cap

    cfg = arq3();
    cfg.delta_max = 2;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);  // cap below user count

    cfg = harq1();
    cfg.delta_max = 3;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);  // cap must exceed r_max

    cfg = arq3();
    cfg.lambda = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg.lambda = 1.2;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);

    cfg = harq1();
    cfg.channels[0].error_curve = {0.9, 0.5};  // wrong length for r_max=3
    CHECK_THROWS_AS(cfg.validate(), ValidationError);

    cfg = arq3();
    cfg.channels[1].error_curve = {1.2};
    CHECK_THROWS_AS(cfg.validate(), ValidationError);  // probability out of range

    cfg = harq1();
    cfg.channels[0].error_curve = {0.5, 0.6, 0.6, 0.6};  // increasing in r
    CHECK_THROWS_AS(cfg.validate(), ValidationError);

    cfg = arq3();
    cfg.channels[2].weight = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);  // weights strictly positive
}

TEST_CASE("action ids form the canonical 2M+1 numbering") {
    const int m = 3;
    CHECK(action_count(m) == 7);
    CHECK(action_id(Action::idle(), m) == 0);
    CHECK(action_id(Action::new_packet(0), m) == 1);
    CHECK(action_id(Action::new_packet(2), m) == 3);
    CHECK(action_id(Action::retransmit(0), m) == 4);
    CHECK(action_id(Action::retransmit(2), m) == 6);
    for (int id = 0; id < action_count(m); ++id)
        CHECK(action_id(action_from_id(id, m), m) == id);
    CHECK(to_string(Action::idle()) == "idle");
    CHECK(to_string(Action::new_packet(0)) == "new(1)");
    CHECK(to_string(Action::retransmit(1)) == "retx(2)");
}

TEST_CASE("initial state staggers the ages 1..M") {
    const SystemState s0 = initial_state(arq3());
    CHECK(s0.age == std::vector<int>{1, 2, 3});
    CHECK(s0.retx == std::vector<int>{0, 0, 0});
}

TEST_CASE("age cost is the weighted sum of ages") {
    EnvConfig cfg;
    cfg.channels = {{{0.1}, 2.0}, {{0.2}, 3.0}};
    cfg.delta_max = 20;
    CHECK(age_cost(make_state({4, 7}, {0, 0}), cfg) == doctest::Approx(2 * 4 + 3 * 7));
}

TEST_CASE("feasible actions: retransmission needs a pending packet below the cap") {
    EnvConfig cfg;
    cfg.protocol = Protocol::Harq;
    cfg.channels = {{{0.5, 0.3}, 1.0}, {{0.5, 0.3}, 1.0}};
    cfg.r_max = 1;
    cfg.delta_max = 10;
    // r_max = 1: a failed packet exists at r=1 but the cap forbids retrying it.
    const SystemState s = make_state({3, 4}, {1, 0});
    CHECK_FALSE(is_feasible(Action::retransmit(0), s, cfg));
    CHECK_FALSE(is_feasible(Action::retransmit(1), s, cfg));

    cfg.r_max = 2;
    cfg.channels = {{{0.5, 0.3, 0.2}, 1.0}, {{0.5, 0.3, 0.2}, 1.0}};
    CHECK(is_feasible(Action::retransmit(0), s, cfg));       // 1 <= r=1 < 2
    CHECK_FALSE(is_feasible(Action::retransmit(1), s, cfg));  // nothing pending
    const std::vector<Action> acts = feasible_actions(s, cfg);
    REQUIRE(acts.size() == 4);  // idle, new(1), new(2), retx(1) in id order
    CHECK(acts[0] == Action::idle());
    CHECK(acts[1] == Action::new_packet(0));
    CHECK(acts[2] == Action::new_packet(1));
    CHECK(acts[3] == Action::retransmit(0));

    EnvConfig arq = arq3();
    CHECK_FALSE(is_feasible(Action::retransmit(0), initial_state(arq), arq));
}

TEST_CASE("new-packet transition splits into delivery and loss branches") {
    EnvConfig cfg;
    cfg.channels = {{{0.3}, 1.0}, {{0.5}, 1.0}};
    cfg.delta_max = 50;
    const SystemState s = make_state({2, 5}, {0, 0});
    const auto out = transition_distribution(s, Action::new_packet(0), cfg);
    REQUIRE(out.size() == 2);
    CHECK(out[0].state == make_state({1, 6}, {0, 0}));
    CHECK(out[0].prob == doctest::Approx(0.7));
    CHECK(out[1].state == make_state({3, 6}, {0, 0}));
    CHECK(out[1].prob == doctest::Approx(0.3));
}

TEST_CASE("retransmission success resets the age to the retry count") {
    // Single user, g(2)=0.25: from (7,2) a retry delivers into (2,0) w.p. 0.75
    // and stays failed into (8,3) w.p. 0.25.
    const EnvConfig cfg = harq1();
    const auto out = transition_distribution(make_state({7}, {2}), Action::retransmit(0), cfg);
    REQUIRE(out.size() == 2);
    CHECK(out[0].state == make_state({2}, {0}));
    CHECK(out[0].prob == doctest::Approx(0.75));
    CHECK(out[1].state == make_state({8}, {3}));
    CHECK(out[1].prob == doctest::Approx(0.25));
}

TEST_CASE("failed first transmission arms the retry counter only under HARQ") {
    EnvConfig harq;
    harq.protocol = Protocol::Harq;
    harq.channels = {{{0.4, 0.2}, 1.0}};
    harq.r_max = 1;
    harq.delta_max = 10;
    auto out = transition_distribution(make_state({3}, {0}), Action::new_packet(0), harq);
    REQUIRE(out.size() == 2);
    CHECK(out[1].state == make_state({4}, {1}));

    EnvConfig arq;
    arq.channels = {{{0.4}, 1.0}};
    arq.delta_max = 10;
    out = transition_distribution(make_state({3}, {0}), Action::new_packet(0), arq);
    REQUIRE(out.size() == 2);
    CHECK(out[1].state == make_state({4}, {0}));
}

TEST_CASE("idle transition ages every user deterministically") {
    const EnvConfig cfg = arq3();
    const auto out = transition_distribution(make_state({1, 50, 7}, {0, 0, 0}), Action::idle(), cfg);
    REQUIRE(out.size() == 1);
    CHECK(out[0].prob == doctest::Approx(1.0));
    CHECK(out[0].state == make_state({2, 50, 8}, {0, 0, 0}));  // saturates at delta_max
}

TEST_CASE("age truncation can collapse both branches into one outcome") {
    EnvConfig cfg;
    cfg.channels = {{{0.5}, 1.0}};
    cfg.delta_max = 1;
    const auto out = transition_distribution(make_state({1}, {0}), Action::new_packet(0), cfg);
    REQUIRE(out.size() == 1);
    CHECK(out[0].prob == doctest::Approx(1.0));
    CHECK(out[0].state == make_state({1}, {0}));
}

TEST_CASE("infeasible actions are rejected by both kernels") {
    const EnvConfig cfg = arq3();
    const SystemState s0 = initial_state(cfg);
    CHECK_THROWS_AS(transition_distribution(s0, Action::retransmit(1), cfg), ValidationError);
    Rng rng(1);
    CHECK_THROWS_AS(step(s0, Action::retransmit(1), cfg, rng), ValidationError);
}

TEST_CASE("transition kernel is stochastic with in-range support along random walks") {
    for (const EnvConfig& cfg : {arq3(), harq1()}) {
        Rng rng(99);
        SystemState s = initial_state(cfg);
        for (int t = 0; t < 400; ++t) {
            const std::vector<Action> acts = feasible_actions(s, cfg);
            for (const Action& a : acts) {
                double total = 0.0;
                for (const Outcome& o : transition_distribution(s, a, cfg)) {
                    CHECK(o.prob > 0.0);
                    total += o.prob;
                    for (int j = 0; j < cfg.users(); ++j) {
                        const int d = o.state.age[static_cast<std::size_t>(j)];
                        const int r = o.state.retx[static_cast<std::size_t>(j)];
                        CHECK(d >= 1);
                        CHECK(d <= cfg.delta_max);
                        CHECK(r >= 0);
                        CHECK(r <= cfg.r_max);
                        CHECK(r < d);  // a packet cannot outpace elapsed slots
                    }
                }
                CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
            }
            const Action a = acts[static_cast<std::size_t>(
                rng.uniform_int(static_cast<int>(acts.size())))];
            s = step(s, a, cfg, rng, AgeCap::DeltaMax).next;
        }
    }
}

TEST_CASE("ARQ trajectories never touch the retry counter") {
    const EnvConfig cfg = arq3();
    Rng rng(5);
    SystemState s = initial_state(cfg);
    for (int t = 0; t < 500; ++t) {
        const std::vector<Action> acts = feasible_actions(s, cfg);
        const std::size_t pick =
            static_cast<std::size_t>(rng.uniform_int(static_cast<int>(acts.size())));
        s = step(s, acts[pick], cfg, rng).next;
        CHECK(s.retx == std::vector<int>{0, 0, 0});
    }
}

TEST_CASE("step charges the pre-transition age and flags transmissions") {
    const EnvConfig cfg = arq3();
    Rng rng(3);
    const SystemState s = make_state({4, 9, 2}, {0, 0, 0});
    const StepResult idle = step(s, Action::idle(), cfg, rng);
    CHECK(idle.age_cost == doctest::Approx(15.0));
    CHECK(idle.tx_cost == 0);
    CHECK_FALSE(idle.delivered);
    const StepResult tx = step(s, Action::new_packet(1), cfg, rng);
    CHECK(tx.age_cost == doctest::Approx(15.0));
    CHECK(tx.tx_cost == 1);
}

TEST_CASE("idle steps draw nothing from the channel stream") {
    const EnvConfig cfg = arq3();
    Rng used(42), fresh(42);
    SystemState s = initial_state(cfg);
    s = step(s, Action::idle(), cfg, used).next;
    s = step(s, Action::idle(), cfg, used).next;
    CHECK(used.next_u64() == fresh.next_u64());
}

TEST_CASE("step delivery frequency matches the channel error rate") {
    EnvConfig cfg;
    cfg.channels = {{{0.3}, 1.0}};
    cfg.delta_max = 10;
    Rng rng(2024);
    const SystemState s = make_state({5}, {0});
    int delivered = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) delivered += step(s, Action::new_packet(0), cfg, rng).delivered;
    CHECK(std::abs(delivered / static_cast<double>(n) - 0.7) < 0.01);
}

TEST_CASE("uncapped simulation lets ages exceed the planning ceiling") {
    EnvConfig cfg;
    cfg.channels = {{{0.0}, 1.0}};
    cfg.delta_max = 3;
    Rng rng(1);
    SystemState s = make_state({3}, {0});
    s = step(s, Action::idle(), cfg, rng).next;  // default cap = None
    CHECK(s.age[0] == 4);
    s = step(s, Action::idle(), cfg, rng, AgeCap::DeltaMax).next;
    CHECK(s.age[0] == 3);  // planning kernel clamps back down
}

TEST_CASE("state space enumerates and round-trips every truncated state") {
    EnvConfig arq;
    arq.channels = {{{0.2}, 1.0}, {{0.4}, 1.0}};
    arq.delta_max = 4;
    const StateSpace sa(arq);
    CHECK(sa.size() == 16);  // 4 ages x 4 ages, r pinned to 0
    for (std::size_t i = 0; i < sa.size(); ++i) CHECK(sa.index_of(sa.state_of(i)) == i);

    const EnvConfig harq = harq1();  // 20 ages x 4 retry levels
    const StateSpace sh(harq);
    CHECK(sh.size() == 80);
    std::set<std::size_t> seen;
    for (std::size_t i = 0; i < sh.size(); ++i) {
        const SystemState s = sh.state_of(i);
        CHECK(s.age[0] >= 1);
        CHECK(s.age[0] <= 20);
        CHECK(s.retx[0] >= 0);
        CHECK(s.retx[0] <= 3);
        seen.insert(sh.index_of(s));
    }
    CHECK(seen.size() == sh.size());
    CHECK(sh.initial_index(harq) == sh.index_of(initial_state(harq)));
}

TEST_CASE("digest clamps over-cap ages while index_of stays strict") {
    EnvConfig cfg;
    cfg.channels = {{{0.2}, 1.0}};
    cfg.delta_max = 5;
    const StateSpace space(cfg);
    const SystemState wild = make_state({9}, {0});
    CHECK_THROWS_AS(space.index_of(wild), ValidationError);
    CHECK(space.digest(wild) == space.index_of(make_state({5}, {0})));
}

TEST_CASE("state space refuses to exceed the configured ceiling") {
    EnvConfig cfg = arq3();  // 50^3 = 125000 states
    CHECK_THROWS_AS(StateSpace(cfg, 1000), ValidationError);
    CHECK_NOTHROW(StateSpace(cfg, 125000));
}

TEST_CASE("seed derivation is deterministic and order-sensitive") {
    CHECK(derive_seed(7, {1, 2}) == derive_seed(7, {1, 2}));
    CHECK(derive_seed(7, {1, 2}) != derive_seed(7, {2, 1}));
    CHECK(derive_seed(7, {1, 2}) != derive_seed(8, {1, 2}));
    CHECK(hash_string("") == 14695981039346656037ull);  // FNV-1a offset basis
    CHECK(hash_string("channel-stream") != hash_string("agent-stream"));
}

TEST_CASE("rng draws stay in range and look uniform at coarse grain") {
    Rng rng(77);
    double sum = 0.0;
    std::set<std::uint64_t> buckets;
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
        buckets.insert(rng.uniform_int(10));
    }
    CHECK(std::abs(sum / 10000 - 0.5) < 0.02);
    CHECK(buckets.size() == 10);
    CHECK_FALSE(rng.bernoulli(0.0));
    CHECK(rng.bernoulli(1.0));
    Rng a(5), b(5);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}
