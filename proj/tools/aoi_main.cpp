// Command-line front end for the AoI scheduling workbench.
//
//   aoi bound     --config run.ini           closed-form ARQ age floor (JSON)
//   aoi solve     --config run.ini           dual ascent + rate-matched mixture (JSON)
//   aoi simulate  --config run.ini           baseline policies, CSV summary
//   aoi learn     --config run.ini           online learners, CSV summary + curves
//   aoi reproduce <preset>                   bundled experiment presets
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aoi/agents.hpp"
#include "aoi/config.hpp"
#include "aoi/harness.hpp"
#include "aoi/policy.hpp"
#include "aoi/presets.hpp"
#include "aoi/solve.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    int seeds = 0;
    std::uint64_t master_seed = 0;
    std::uint64_t horizon = 0;
    bool quiet = false;
    CLI::Option* out_opt = nullptr;
    CLI::Option* seeds_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* horizon_opt = nullptr;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f, bool config_required) {
    CLI::Option* c = cmd->add_option("--config", f.config_path, "run configuration file");
    if (config_required) c->required()->check(CLI::ExistingFile);
    f.out_opt = cmd->add_option("--out", f.out_dir, "output directory for artifacts");
    f.seeds_opt = cmd->add_option("--seeds", f.seeds, "replicates per sweep cell");
    f.seed_opt = cmd->add_option("--master-seed", f.master_seed, "root seed for all streams");
    f.horizon_opt = cmd->add_option("--horizon", f.horizon, "rollout length in slots");
    cmd->add_flag("--quiet", f.quiet, "suppress progress messages");
}

aoi::CliConfig load_config(const CommonFlags& f) {
    aoi::CliConfig cfg =
        f.config_path.empty() ? aoi::CliConfig{} : aoi::CliConfig::load(f.config_path);
    if (f.out_opt && f.out_opt->count()) cfg.run.out = f.out_dir;
    if (f.seeds_opt && f.seeds_opt->count()) cfg.run.seeds = f.seeds;
    if (f.seed_opt && f.seed_opt->count()) cfg.run.master_seed = f.master_seed;
    if (f.horizon_opt && f.horizon_opt->count()) cfg.run.horizon = f.horizon;
    return cfg;
}

std::ostream& progress(const CommonFlags& f) {
    static std::ofstream null_sink;  // default-constructed: writes are no-ops
    return f.quiet ? static_cast<std::ostream&>(null_sink) : std::cerr;
}

void write_outputs(const aoi::SweepOutput& result, const std::string& preset_name,
                   const fs::path& dir, const CommonFlags& flags) {
    fs::create_directories(dir);
    const fs::path summary = dir / (preset_name + ".csv");
    {
        std::ofstream out(summary);
        if (!out) throw aoi::RolloutError("cannot write " + summary.string());
        aoi::write_sweep_csv(out, result.rows);
    }
    progress(flags) << "wrote " << summary.string() << "\n";
    if (!result.curves.empty()) {
        const fs::path curves = dir / (preset_name + "_curves.csv");
        std::ofstream out(curves);
        if (!out) throw aoi::RolloutError("cannot write " + curves.string());
        aoi::write_curves_csv(out, preset_name, result.curves);
        progress(flags) << "wrote " << curves.string() << "\n";
    }
    for (const aoi::SweepRow& row : result.rows)
        if (row.failed)
            std::cerr << "warning: " << preset_name << " " << row.sweep_var << "="
                      << row.sweep_value << " agent=" << row.agent << " failed: " << row.error
                      << "\n";
}

json env_echo(const aoi::EnvConfig& env) {
    json j;
    j["users"] = env.users();
    j["protocol"] = env.protocol == aoi::Protocol::Arq ? "arq" : "harq";
    j["lambda"] = env.lambda;
    j["delta_max"] = env.delta_max;
    j["r_max"] = env.r_max;
    std::vector<double> p, w;
    for (int u = 0; u < env.users(); ++u) {
        p.push_back(env.error_prob(u, 0));
        w.push_back(env.weight(u));
    }
    j["p"] = p;
    j["w"] = w;
    return j;
}

void cmd_bound(const CommonFlags& flags) {
    const aoi::CliConfig cfg = load_config(flags);
    const aoi::EnvConfig env = cfg.make_env();
    const aoi::LowerBoundResult lb = aoi::lower_bound(env);
    json out;
    out["J_LB"] = lb.value;
    out["j_star"] = lb.j_star + 1;  // 1-based in reports
    out["inputs"] = env_echo(env);
    std::cout << out.dump(2) << "\n";
}

aoi::ConstrainedOptions constrained_options(const aoi::CliConfig& cfg) {
    aoi::ConstrainedOptions opts;
    opts.dual = cfg.make_dual_options();
    opts.xi = cfg.solver.xi > 0.0 ? cfg.solver.xi : -1.0;
    return opts;
}

void cmd_solve(const CommonFlags& flags) {
    const aoi::CliConfig cfg = load_config(flags);
    const aoi::EnvConfig env = cfg.make_env();
    const aoi::StateSpace space(env, cfg.solver.state_ceiling);
    aoi::PolicyEvalCache cache;

    progress(flags) << "state space: " << space.size() << " states\n";
    const aoi::ConstrainedSolution sol = aoi::solve_constrained(env, constrained_options(cfg), &cache);
    progress(flags) << "dual ascent: eta*=" << sol.dual.eta_star << " after " << sol.dual.iters
                    << " iterations\n";
    if (sol.dual_capped)
        progress(flags) << "dual ascent: iteration budget spent; continuing from the last price\n";
    if (sol.widenings > 0)
        progress(flags) << "mixture: bracket widened " << sol.widenings << " time(s)\n";
    if (sol.bisected)
        progress(flags) << "mixture: bracketed the rate crossing by bisection (eta in ["
                        << sol.mixture.eta1 << ", " << sol.mixture.eta2 << "])\n";
    progress(flags) << "mixture: mu=" << sol.mixture.policy.mu << " J=" << sol.j << " C=" << sol.c
                    << "\n";

    json out;
    out["eta_star"] = sol.dual.eta_star;
    out["dual_iters"] = sol.dual.iters;
    out["dual_capped"] = sol.dual_capped;
    out["gain"] = sol.dual.at_eta_star.gain;
    out["residual"] = sol.dual.at_eta_star.residual;
    out["sweeps"] = sol.dual.at_eta_star.sweeps;
    out["J"] = sol.j;
    out["C"] = sol.c;
    out["constraint_met"] = sol.matched;
    out["constraint_slack"] = sol.slack;
    out["mixture"] = {{"eta1", sol.mixture.eta1},       {"eta2", sol.mixture.eta2},
                      {"c_low", sol.mixture.c_low},     {"c_high", sol.mixture.c_high},
                      {"mu", sol.mixture.policy.mu},    {"widenings", sol.widenings},
                      {"bisected", sol.bisected},       {"clamped", sol.mixture.clamped},
                      {"degenerate", sol.mixture.degenerate}};
    out["inputs"] = env_echo(env);
    std::cout << out.dump(2) << "\n";
}

aoi::AgentSpec baseline_spec(const std::string& name, const aoi::CliConfig& cfg) {
    using namespace aoi;
    if (name == "whittle")
        return {"whittle",
                [](const EnvConfig& e) -> std::unique_ptr<Agent> {
                    return std::make_unique<WhittleAgent>(e);
                },
                nullptr};
    if (name == "greedy")
        return {"greedy",
                [](const EnvConfig& e) -> std::unique_ptr<Agent> {
                    return std::make_unique<GreedyAgent>(e);
                },
                nullptr};
    if (name == "round-robin")
        return {"round-robin",
                [](const EnvConfig& e) -> std::unique_ptr<Agent> {
                    return std::make_unique<RoundRobinAgent>(e);
                },
                nullptr};
    if (name == "idle")
        return {"idle",
                [](const EnvConfig&) -> std::unique_ptr<Agent> {
                    return std::make_unique<IdleAgent>();
                },
                nullptr};
    if (name == "lower-bound") return detail::bound_spec();
    if (name == "optimal") {
        const SolverSection s = cfg.solver;
        return {"optimal",
                [s](const EnvConfig& e) -> std::unique_ptr<Agent> {
                    ConstrainedOptions opts;
                    opts.dual.eta0 = s.eta0;
                    opts.dual.eps = s.eps;
                    opts.dual.max_iters = s.dual_max_iter;
                    opts.dual.rvi.tol = s.tol;
                    opts.dual.rvi.max_sweeps = s.max_iter;
                    opts.dual.rvi.state_ceiling = s.state_ceiling;
                    opts.xi = s.xi > 0.0 ? s.xi : -1.0;
                    ConstrainedSolution sol = solve_constrained(e, opts);
                    return std::make_unique<MixtureAgent>("optimal", e, std::move(sol.mixture.policy));
                },
                nullptr};
    }
    throw ValidationError("unknown agent '" + name +
                          "' (available: whittle, greedy, round-robin, idle, optimal, "
                          "lower-bound)");
}

void cmd_simulate(const CommonFlags& flags, const std::vector<std::string>& agent_names) {
    const aoi::CliConfig cfg = load_config(flags);
    const aoi::EnvConfig env = cfg.make_env();
    aoi::ExperimentPreset preset;
    preset.name = "simulate";
    preset.sweep_var = "lambda";
    preset.sweep_values = {env.lambda};
    preset.env_at = [env](double) { return env; };
    const std::vector<std::string> names =
        agent_names.empty() ? std::vector<std::string>{"whittle", "greedy", "round-robin"}
                            : agent_names;
    for (const std::string& n : names) preset.agents.push_back(baseline_spec(n, cfg));
    preset.horizon = cfg.run.horizon;
    preset.seeds = cfg.run.seeds;
    preset.master_seed = cfg.run.master_seed;
    preset.curve_stride = cfg.run.curve_stride;
    preset.burn_in = cfg.run.burn_in;
    progress(flags) << "simulate: " << names.size() << " agents x " << preset.seeds
                    << " seeds, horizon " << preset.horizon << "\n";
    write_outputs(aoi::run_sweep(preset), preset.name, cfg.run.out, flags);
}

void cmd_learn(const CommonFlags& flags) {
    const aoi::CliConfig cfg = load_config(flags);
    const aoi::EnvConfig env = cfg.make_env();
    // The learning length comes from [learner] T; --horizon still wins.
    const std::uint64_t horizon =
        (flags.horizon_opt && flags.horizon_opt->count()) ? flags.horizon : cfg.learner.T;
    aoi::LearnerConfig lc = cfg.make_learner_config();
    lc.horizon = horizon;

    aoi::ExperimentPreset preset;
    preset.name = "learn";
    preset.sweep_var = "lambda";
    preset.sweep_values = {env.lambda};
    preset.env_at = [env](double) { return env; };
    auto ucrl = [&lc](aoi::LearnerConfig::Planner planner) {
        aoi::LearnerConfig c = lc;
        c.planner = planner;
        const std::string label =
            planner == aoi::LearnerConfig::Planner::Vi ? "ucrl2-vi" : "ucrl2-whittle";
        return aoi::AgentSpec{label,
                              [c](const aoi::EnvConfig& e) -> std::unique_ptr<aoi::Agent> {
                                  return std::make_unique<aoi::UcrlAgent>(e, c);
                              },
                              nullptr};
    };
    preset.agents.push_back(ucrl(aoi::LearnerConfig::Planner::Vi));
    if (env.protocol == aoi::Protocol::Arq)
        preset.agents.push_back(ucrl(aoi::LearnerConfig::Planner::Whittle));
    {
        aoi::LearnerConfig c = lc;
        preset.agents.push_back({"sarsa",
                                 [c](const aoi::EnvConfig& e) -> std::unique_ptr<aoi::Agent> {
                                     return std::make_unique<aoi::SarsaAgent>(e, c);
                                 },
                                 nullptr});
    }
    preset.agents.push_back(aoi::detail::oracle_spec());
    preset.horizon = horizon;
    preset.seeds = cfg.run.seeds;
    preset.master_seed = cfg.run.master_seed;
    preset.curve_stride =
        cfg.run.curve_stride ? cfg.run.curve_stride : std::max<std::uint64_t>(1, horizon / 200);
    preset.burn_in = cfg.run.burn_in;
    progress(flags) << "learn: " << preset.agents.size() << " agents x " << preset.seeds
                    << " seeds, horizon " << horizon << "\n";
    write_outputs(aoi::run_sweep(preset), preset.name, cfg.run.out, flags);
}

// Accepts "2..6" (inclusive range), or a comma/space list already split by CLI11.
std::vector<double> parse_sizes(const std::vector<std::string>& tokens) {
    std::vector<double> out;
    for (const std::string& tok : tokens) {
        const std::size_t dots = tok.find("..");
        if (dots != std::string::npos) {
            const int lo = std::stoi(tok.substr(0, dots));
            const int hi = std::stoi(tok.substr(dots + 2));
            if (lo < 1 || hi < lo)
                throw aoi::ValidationError("bad size range '" + tok + "'");
            for (int m = lo; m <= hi; ++m) out.push_back(m);
        } else {
            out.push_back(std::stod(tok));
        }
    }
    return out;
}

void cmd_reproduce(const CommonFlags& flags, const std::string& name,
                   const std::vector<std::string>& size_tokens, bool full_seeds) {
    const aoi::CliConfig cfg = load_config(flags);
    int seeds = (flags.seeds_opt && flags.seeds_opt->count()) ? flags.seeds
                : full_seeds                                  ? 100
                                                              : 10;
    const std::uint64_t horizon =
        (flags.horizon_opt && flags.horizon_opt->count()) ? flags.horizon : 100000;
    aoi::ExperimentPreset preset =
        aoi::make_preset(name, seeds, horizon, parse_sizes(size_tokens));
    if (flags.seed_opt && flags.seed_opt->count()) preset.master_seed = flags.master_seed;
    progress(flags) << preset.name << ": " << preset.sweep_values.size() << " cells x "
                    << preset.agents.size() << " agents x " << seeds << " seeds, horizon "
                    << horizon << "\n";
    write_outputs(aoi::run_sweep(preset), preset.name, cfg.run.out, flags);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"age-of-information transmission-scheduling workbench"};
    app.require_subcommand(1);

    CommonFlags bound_f, solve_f, sim_f, learn_f, repro_f;
    std::vector<std::string> sim_agents;
    std::string repro_name;
    std::vector<std::string> repro_sizes;
    bool repro_full = false;

    CLI::App* bound = app.add_subcommand("bound", "closed-form average-age floor (ARQ)");
    add_common_flags(bound, bound_f, true);
    bound->callback([&] { cmd_bound(bound_f); });

    CLI::App* solve = app.add_subcommand("solve", "price search + rate-matched mixture policy");
    add_common_flags(solve, solve_f, true);
    solve->callback([&] { cmd_solve(solve_f); });

    CLI::App* sim = app.add_subcommand("simulate", "baseline policies on the configured network");
    add_common_flags(sim, sim_f, true);
    sim->add_option("--agents", sim_agents,
                    "agents to run (whittle greedy round-robin idle optimal lower-bound)")
        ->delimiter(',');
    sim->callback([&] { cmd_simulate(sim_f, sim_agents); });

    CLI::App* learn = app.add_subcommand("learn", "online learners on the configured network");
    add_common_flags(learn, learn_f, true);
    learn->callback([&] { cmd_learn(learn_f); });

    CLI::App* repro = app.add_subcommand("reproduce", "bundled experiment presets");
    repro->add_option("preset", repro_name,
                      "rate-sweep|size-sweep|arq-learning|harq-learning (fig2..fig5 accepted)")
        ->required();
    add_common_flags(repro, repro_f, false);
    repro->add_option("--sizes", repro_sizes, "network sizes for size-sweep, e.g. 2..6")
        ->delimiter(',');
    repro->add_flag("--full-seeds", repro_full, "run the full 100-seed replication");
    repro->callback([&] { cmd_reproduce(repro_f, repro_name, repro_sizes, repro_full); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const aoi::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
