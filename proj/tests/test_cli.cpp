#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

const fs::path& work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "aoi-cli-tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

CmdResult run_cli(const std::string& args) {
    const fs::path out_path = work_dir() / "stdout.txt";
    const fs::path err_path = work_dir() / "stderr.txt";
    const std::string cmd = std::string(AOI_CLI_PATH) + " " + args + " > " + out_path.string() +
                            " 2> " + err_path.string();
    const int status = std::system(cmd.c_str());
    CmdResult res;
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    res.out = slurp(out_path);
    res.err = slurp(err_path);
    return res;
}

const fs::path& three_user_config() {
    static const fs::path p = [] {
        const fs::path path = work_dir() / "three-user.ini";
        write_file(path,
                   "[env]\nusers = 3\nprotocol = arq\np = 0.5 0.2 0.1\ndelta_max = 50\n"
                   "lambda = 1.0\n");
        return path;
    }();
    return p;
}

}  // namespace

TEST_CASE("bound emits the closed-form floor as json") {
    const CmdResult res = run_cli("bound --config " + three_user_config().string());
    REQUIRE(res.exit_code == 0);
    const json j = json::parse(res.out);
    CHECK(std::abs(j.at("J_LB").get<double>() - 7.9864732281727397821) < 1e-9);
    CHECK(j.at("j_star").get<int>() == 3);
    CHECK(j.at("inputs").at("users").get<int>() == 3);
}

TEST_CASE("bound refuses a HARQ configuration with exit code 1") {
    const fs::path cfg = work_dir() / "harq.ini";
    write_file(cfg,
               "[env]\nusers = 1\nprotocol = harq\nr_max = 1\ndelta_max = 10\n"
               "g1 = 0.5 0.25\n");
    const CmdResult res = run_cli("bound --config " + cfg.string());
    CHECK(res.exit_code == 1);
    CHECK(res.err.find("error") != std::string::npos);
}

TEST_CASE("solve reports the trivial unconstrained single-user solution") {
    const fs::path cfg = work_dir() / "single.ini";
    write_file(cfg, "[env]\nusers = 1\np = 0.0\ndelta_max = 10\nlambda = 1.0\n");
    const CmdResult res = run_cli("solve --quiet --config " + cfg.string());
    REQUIRE(res.exit_code == 0);
    const json j = json::parse(res.out);
    CHECK(j.at("J").get<double>() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(j.at("C").get<double>() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(j.at("eta_star").get<double>() == doctest::Approx(0.0));
    CHECK(j.at("mixture").at("degenerate").get<bool>());
    CHECK(res.err.empty());  // --quiet silences progress
}

TEST_CASE("solve matches the budget with a mixture on a binding constraint") {
    const fs::path cfg = work_dir() / "binding.ini";
    write_file(cfg, "[env]\nusers = 2\np = 0.2 0.4\ndelta_max = 20\nlambda = 0.5\n");
    const CmdResult bound_res = run_cli("bound --config " + cfg.string());
    REQUIRE(bound_res.exit_code == 0);
    const double j_lb = json::parse(bound_res.out).at("J_LB").get<double>();

    const CmdResult res = run_cli("solve --quiet --config " + cfg.string());
    REQUIRE(res.exit_code == 0);
    const json j = json::parse(res.out);
    CHECK(j.at("constraint_met").get<bool>());
    CHECK(std::abs(j.at("C").get<double>() - 0.5) <= 0.01);
    CHECK(j.at("J").get<double>() >= j_lb - 1e-9);
    CHECK(j.at("residual").get<double>() <= 1e-6);
    // The price bracket sits around eta_star unless the solver had to chase
    // the rate crossing beyond it by bisection.
    if (!j.at("mixture").at("bisected").get<bool>())
        CHECK(j.at("mixture").at("eta1").get<double>() <= j.at("eta_star").get<double>());
    CHECK(j.at("mixture").at("eta1").get<double>() <= j.at("mixture").at("eta2").get<double>());
}

TEST_CASE("solve recovers from an exhausted dual iteration budget") {
    const fs::path cfg = work_dir() / "capped.ini";
    write_file(cfg,
               "[env]\nusers = 1\np = 0.3\ndelta_max = 30\nlambda = 0.3\n"
               "[solver]\ndual_max_iter = 2\n");
    const CmdResult res = run_cli("solve --quiet --config " + cfg.string());
    REQUIRE(res.exit_code == 0);
    const json j = json::parse(res.out);
    CHECK(j.at("dual_capped").get<bool>());
    CHECK(j.at("dual_iters").get<int>() == 2);
    CHECK(j.at("constraint_met").get<bool>());
    CHECK(std::abs(j.at("C").get<double>() - 0.3) <= 0.01);
}

TEST_CASE("invalid probabilities are rejected at load time") {
    const fs::path cfg = work_dir() / "badp.ini";
    write_file(cfg, "[env]\nusers = 1\np = 1.2\ndelta_max = 10\n");
    const CmdResult res = run_cli("solve --config " + cfg.string());
    CHECK(res.exit_code == 1);
}

TEST_CASE("missing required flags and unknown presets exit nonzero") {
    CHECK(run_cli("bound").exit_code != 0);
    const CmdResult res = run_cli("reproduce fig9");
    CHECK(res.exit_code == 1);
    CHECK(res.err.find("rate-sweep") != std::string::npos);  // lists what exists
}

TEST_CASE("simulate writes a summary csv for the chosen baselines") {
    const fs::path cfg = work_dir() / "sim.ini";
    const fs::path out_dir = work_dir() / "sim-out";
    write_file(cfg, "[env]\nusers = 2\np = 0.2 0.4\ndelta_max = 20\nlambda = 1.0\n");
    const CmdResult res =
        run_cli("simulate --quiet --config " + cfg.string() + " --seeds 2 --horizon 2000 --out " +
                out_dir.string() + " --agents greedy,round-robin");
    REQUIRE(res.exit_code == 0);
    const std::string csv = slurp(out_dir / "simulate.csv");
    CHECK(csv.find("preset,sweep_var,sweep_value,agent,seed_count,mean_J,std_J,mean_C,std_C\n") ==
          0);
    CHECK(csv.find("simulate,lambda,1,greedy,2,") != std::string::npos);
    CHECK(csv.find("round-robin") != std::string::npos);
}

TEST_CASE("learn writes summary and curve csvs for every applicable learner") {
    const fs::path cfg = work_dir() / "learn.ini";
    const fs::path out_dir = work_dir() / "learn-out";
    write_file(cfg,
               "[env]\nusers = 2\np = 0.2 0.4\ndelta_max = 20\nlambda = 1.0\n"
               "[learner]\nT = 1500\n"
               "[run]\nseeds = 2\n");
    const CmdResult res =
        run_cli("learn --quiet --config " + cfg.string() + " --out " + out_dir.string());
    REQUIRE(res.exit_code == 0);
    const std::string csv = slurp(out_dir / "learn.csv");
    for (const char* agent : {"ucrl2-vi", "ucrl2-whittle", "sarsa", "vi-oracle"})
        CHECK(csv.find(agent) != std::string::npos);
    CHECK(fs::exists(out_dir / "learn_curves.csv"));
    const std::string curves = slurp(out_dir / "learn_curves.csv");
    CHECK(curves.find("preset,sweep_value,agent,t,mean_running_J\n") == 0);
}

TEST_CASE("reproduce runs a scaled-down size sweep end to end") {
    const fs::path out_dir = work_dir() / "repro-out";
    const CmdResult res = run_cli("reproduce size-sweep --sizes 2..3 --seeds 1 --horizon 3000 "
                                  "--quiet --out " +
                                  out_dir.string());
    REQUIRE(res.exit_code == 0);
    const std::string csv = slurp(out_dir / "size-sweep.csv");
    int rows = -1;  // discount the header
    for (const char ch : csv) rows += ch == '\n';
    CHECK(rows == 10);  // 2 sizes x 5 agents
    CHECK(csv.find("size-sweep,users,2,") != std::string::npos);
    CHECK(csv.find("lower-bound") != std::string::npos);

    // The short alias lands on the same functional preset.
    const CmdResult alias =
        run_cli("reproduce fig3 --sizes 2..2 --seeds 1 --horizon 1000 --quiet --out " +
                out_dir.string());
    CHECK(alias.exit_code == 0);
    CHECK(fs::exists(out_dir / "size-sweep.csv"));
}
