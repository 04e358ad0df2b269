#include <doctest.h>

#include <sstream>
#include <string>

#include "aoi/config.hpp"

using namespace aoi;

TEST_CASE("an empty document materializes every default") {
    const CliConfig cfg = CliConfig::parse_string("");
    CHECK(cfg == CliConfig{});
    CHECK(cfg.env.users == 1);
    CHECK(cfg.env.protocol == "arq");
    CHECK(cfg.solver.tol == doctest::Approx(1e-6));
    CHECK(cfg.solver.dual_max_iter == 500);
    CHECK(cfg.learner.planner == "vi");
    CHECK(cfg.run.seeds == 10);
    CHECK(cfg.run.master_seed == 12345);
}

TEST_CASE("a full document parses into the expected sections") {
    const std::string doc = R"(# reference three-user setup
[env]
users = 3
protocol = arq            ; trailing comment
p = 0.5 0.2 0.1
w = 1 1 1
delta_max = 50
lambda = 0.5

[solver]
tol = 1e-8
eta0 = 2.5
dual_max_iter = 800

[learner]
planner = whittle
alpha = 25
T = 40000

[run]
seeds = 4
master_seed = 777
out = results
horizon = 12345
)";
    const CliConfig cfg = CliConfig::parse_string(doc);
    CHECK(cfg.env.users == 3);
    CHECK(cfg.env.p == std::vector<double>{0.5, 0.2, 0.1});
    CHECK(cfg.env.lambda == doctest::Approx(0.5));
    CHECK(cfg.solver.tol == doctest::Approx(1e-8));
    CHECK(cfg.solver.eta0 == doctest::Approx(2.5));
    CHECK(cfg.solver.dual_max_iter == 800);
    CHECK(cfg.learner.planner == "whittle");
    CHECK(cfg.learner.alpha == doctest::Approx(25.0));
    CHECK(cfg.learner.T == 40000);
    CHECK(cfg.run.seeds == 4);
    CHECK(cfg.run.master_seed == 777);
    CHECK(cfg.run.out == "results");
    CHECK(cfg.run.horizon == 12345);
}

TEST_CASE("serialization round-trips to an identical document") {
    CliConfig cfg;
    cfg.env.users = 2;
    cfg.env.protocol = "harq";
    cfg.env.r_max = 3;
    cfg.env.delta_max = 30;
    cfg.env.lambda = 0.75;
    cfg.env.g_p0 = 0.5;
    cfg.env.g_q = 0.5;
    cfg.env.w = {1.0, 2.0};
    cfg.solver.xi = 0.125;
    cfg.learner.alpha = 100.0;
    cfg.run.out = "exp";
    const CliConfig back = CliConfig::parse_string(cfg.serialize());
    CHECK(back == cfg);
    CHECK(CliConfig::parse_string(back.serialize()) == back);

    CliConfig explicit_curves;
    explicit_curves.env.users = 2;
    explicit_curves.env.protocol = "harq";
    explicit_curves.env.r_max = 1;
    explicit_curves.env.delta_max = 10;
    explicit_curves.env.g[1] = {0.5, 0.25};
    explicit_curves.env.g[2] = {0.4, 0.1};
    CHECK(CliConfig::parse_string(explicit_curves.serialize()) == explicit_curves);
}

TEST_CASE("unknown keys and sections are rejected with line numbers") {
    try {
        CliConfig::parse_string("[env]\nusers = 1\nbogus = 3\n");
        FAIL("expected rejection");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
        CHECK(std::string(e.what()).find("bogus") != std::string::npos);
    }
    CHECK_THROWS_AS(CliConfig::parse_string("[nope]\n"), ValidationError);
    CHECK_THROWS_AS(CliConfig::parse_string("[env\nusers = 1\n"), ValidationError);
    CHECK_THROWS_AS(CliConfig::parse_string("users = 1\n"), ValidationError);  // no section
    CHECK_THROWS_AS(CliConfig::parse_string("[env]\nusers\n"), ValidationError);
    CHECK_THROWS_AS(CliConfig::parse_string("[env]\nlambda = fast\n"), ValidationError);
    CHECK_THROWS_AS(CliConfig::parse_string("[env]\nusers = 2x\n"), ValidationError);
    CHECK_THROWS_AS(CliConfig::parse_string("[run]\nseeds = \n"), ValidationError);
}

TEST_CASE("the environment builder enforces protocol-specific channel inputs") {
    CliConfig arq;
    arq.env.users = 2;
    arq.env.p = {0.3, 0.6};
    arq.env.delta_max = 20;
    const EnvConfig env = arq.make_env();
    CHECK(env.users() == 2);
    CHECK(env.error_prob(1, 0) == doctest::Approx(0.6));
    CHECK(env.weight(0) == doctest::Approx(1.0));  // weights default to ones

    CliConfig bad = arq;
    bad.env.p = {0.3};
    CHECK_THROWS_AS(bad.make_env(), ValidationError);  // wrong arity
    bad = arq;
    bad.env.p = {0.3, 1.2};
    CHECK_THROWS_AS(bad.make_env(), ValidationError);  // out-of-range probability
    bad = arq;
    bad.env.g_p0 = 0.5;
    CHECK_THROWS_AS(bad.make_env(), ValidationError);  // curves are a HARQ thing
    bad = arq;
    bad.env.protocol = "carrier-pigeon";
    CHECK_THROWS_AS(bad.make_env(), ValidationError);
}

TEST_CASE("the environment builder assembles HARQ retry curves both ways") {
    CliConfig geo;
    geo.env.users = 2;
    geo.env.protocol = "harq";
    geo.env.r_max = 3;
    geo.env.delta_max = 30;
    geo.env.g_p0 = 0.5;
    geo.env.g_q = 0.5;
    const EnvConfig gen = geo.make_env();
    CHECK(gen.error_prob(0, 2) == doctest::Approx(0.125));
    CHECK(gen.error_prob(1, 3) == doctest::Approx(0.0625));

    CliConfig curves;
    curves.env.users = 1;
    curves.env.protocol = "harq";
    curves.env.r_max = 1;
    curves.env.delta_max = 10;
    curves.env.g[1] = {0.5, 0.2};
    CHECK(curves.make_env().error_prob(0, 1) == doctest::Approx(0.2));

    CliConfig bad = geo;
    bad.env.p = {0.1, 0.2};
    CHECK_THROWS_AS(bad.make_env(), ValidationError);  // p belongs to ARQ
    bad = geo;
    bad.env.g[1] = {0.5, 0.4, 0.3, 0.2};
    CHECK_THROWS_AS(bad.make_env(), ValidationError);  // family and explicit curves clash
    bad = geo;
    bad.env.g_q.reset();
    CHECK_THROWS_AS(bad.make_env(), ValidationError);  // family needs both parameters
    bad = curves;
    bad.env.users = 2;
    CHECK_THROWS_AS(bad.make_env(), ValidationError);  // user 2's curve missing
    bad = curves;
    bad.env.g[3] = {0.5, 0.2};
    CHECK_THROWS_AS(bad.make_env(), ValidationError);  // curve for a nonexistent user
}

TEST_CASE("option factories map the solver and learner sections through") {
    CliConfig cfg;
    cfg.solver.tol = 1e-5;
    cfg.solver.max_iter = 777;
    cfg.solver.eta0 = 1.5;
    cfg.solver.eps = 0.01;
    cfg.solver.dual_max_iter = 99;
    cfg.solver.state_ceiling = 4242;
    const RviOptions rvi = cfg.make_rvi_options();
    CHECK(rvi.tol == doctest::Approx(1e-5));
    CHECK(rvi.max_sweeps == 777);
    CHECK(rvi.state_ceiling == 4242);
    const DualAscentOptions dual = cfg.make_dual_options();
    CHECK(dual.eta0 == doctest::Approx(1.5));
    CHECK(dual.eps == doctest::Approx(0.01));
    CHECK(dual.max_iters == 99);
    CHECK(dual.rvi.tol == doctest::Approx(1e-5));

    cfg.learner.planner = "whittle";
    cfg.learner.delta = 0.1;
    cfg.learner.alpha = 42.0;
    cfg.learner.T = 2500;
    const LearnerConfig lc = cfg.make_learner_config();
    CHECK(lc.planner == LearnerConfig::Planner::Whittle);
    CHECK(lc.confidence == doctest::Approx(0.1));
    CHECK(lc.alpha == doctest::Approx(42.0));
    CHECK(lc.horizon == 2500);
    cfg.learner.planner = "sideways";
    CHECK_THROWS_AS(cfg.make_learner_config(), ValidationError);
}

TEST_CASE("loading a missing file fails cleanly") {
    CHECK_THROWS_AS(CliConfig::load("/nonexistent/path/run.ini"), ValidationError);
}
