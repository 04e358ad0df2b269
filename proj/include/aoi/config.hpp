#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "aoi/learn.hpp"
#include "aoi/solve.hpp"
#include "aoi/types.hpp"

// Plain-text run configuration.
//
// Grammar: `[section]` headers followed by `key = value` lines; `#` or `;`
// start a comment; blank lines ignored; list values are whitespace-
// separated.  Sections and keys outside the schema below are rejected.
//
//   [env]     users, protocol (arq|harq), r_max, delta_max, lambda,
//             p  = p_1 .. p_M            (ARQ per-user error rates)
//             g1 = g(0) .. g(r_max)      (HARQ explicit curve, one per user)
//             g_p0, g_q                  (HARQ geometric family p0*q^r, all users)
//             w  = w_1 .. w_M            (optional, default all 1)
//   [solver]  tol, max_iter, eta0, eps, xi (0 = auto), dual_max_iter,
//             state_ceiling
//   [learner] delta, alpha, U, planner (vi|whittle), T
//   [run]     seeds, master_seed, out, horizon, curve_stride, burn_in
//
// Parsing applies defaults immediately, so serialize() emits a complete
// document and load(serialize(load(x))) == load(x).

namespace aoi {

struct EnvSection {
    int users = 1;
    std::string protocol = "arq";
    int r_max = 0;
    int delta_max = 100;
    double lambda = 1.0;
    std::vector<double> p;
    std::vector<double> w;
    std::map<int, std::vector<double>> g;  // 1-based user -> explicit curve
    std::optional<double> g_p0, g_q;
    bool operator==(const EnvSection&) const = default;
};

struct SolverSection {
    double tol = 1e-6;
    std::int64_t max_iter = 100000;
    double eta0 = 0.0;
    double eps = 1e-3;
    double xi = 0.0;  // 0 = auto: 0.05 * max(eta*, 1)
    int dual_max_iter = 500;
    std::uint64_t state_ceiling = 1'000'000;
    bool operator==(const SolverSection&) const = default;
};

struct LearnerSection {
    double delta = 0.05;
    double alpha = 100.0;
    double U = 1.0;
    std::string planner = "vi";
    std::uint64_t T = 100000;
    bool operator==(const LearnerSection&) const = default;
};

struct RunSection {
    int seeds = 10;
    std::uint64_t master_seed = 12345;
    std::string out = "out";
    std::uint64_t horizon = 100000;
    std::uint64_t curve_stride = 0;
    std::uint64_t burn_in = 0;
    bool operator==(const RunSection&) const = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline double parse_double(const std::string& value, int line) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(value, &used);
    } catch (const std::exception&) {
        throw ValidationError("config line " + std::to_string(line) + ": '" + value +
                              "' is not a number");
    }
    if (used != value.size())
        throw ValidationError("config line " + std::to_string(line) + ": trailing junk in '" +
                              value + "'");
    return out;
}

inline std::int64_t parse_int(const std::string& value, int line) {
    std::size_t used = 0;
    std::int64_t out = 0;
    try {
        out = std::stoll(value, &used);
    } catch (const std::exception&) {
        throw ValidationError("config line " + std::to_string(line) + ": '" + value +
                              "' is not an integer");
    }
    if (used != value.size())
        throw ValidationError("config line " + std::to_string(line) + ": trailing junk in '" +
                              value + "'");
    return out;
}

inline std::vector<double> parse_list(const std::string& value, int line) {
    std::vector<double> out;
    std::istringstream in(value);
    std::string token;
    while (in >> token) out.push_back(parse_double(token, line));
    if (out.empty())
        throw ValidationError("config line " + std::to_string(line) + ": empty list");
    return out;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string format_list(const std::vector<double>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ' ';
        out += format_double(xs[i]);
    }
    return out;
}

}  // namespace detail

struct CliConfig {
    EnvSection env;
    SolverSection solver;
    LearnerSection learner;
    RunSection run;
    bool operator==(const CliConfig&) const = default;

    static CliConfig parse(std::istream& in) {
        CliConfig cfg;
        std::string section, raw;
        int line_no = 0;
        while (std::getline(in, raw)) {
            ++line_no;
            std::string line = raw;
            if (const std::size_t hash = line.find_first_of("#;"); hash != std::string::npos)
                line.resize(hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ValidationError("config line " + std::to_string(line_no) +
                                          ": malformed section header");
                section = detail::trim(line.substr(1, line.size() - 2));
                if (section != "env" && section != "solver" && section != "learner" &&
                    section != "run")
                    throw ValidationError("config line " + std::to_string(line_no) +
                                          ": unknown section [" + section + "]");
                continue;
            }
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw ValidationError("config line " + std::to_string(line_no) +
                                      ": expected key = value");
            const std::string key = detail::trim(line.substr(0, eq));
            const std::string value = detail::trim(line.substr(eq + 1));
            if (section.empty())
                throw ValidationError("config line " + std::to_string(line_no) +
                                      ": key '" + key + "' outside any section");
            cfg.apply(section, key, value, line_no);
        }
        return cfg;
    }

    static CliConfig parse_string(const std::string& text) {
        std::istringstream in(text);
        return parse(in);
    }

    static CliConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ValidationError("cannot open config file '" + path + "'");
        return parse(in);
    }

    std::string serialize() const {
        std::ostringstream out;
        out << "[env]\n";
        out << "users = " << env.users << "\n";
        out << "protocol = " << env.protocol << "\n";
        out << "r_max = " << env.r_max << "\n";
        out << "delta_max = " << env.delta_max << "\n";
        out << "lambda = " << detail::format_double(env.lambda) << "\n";
        if (!env.p.empty()) out << "p = " << detail::format_list(env.p) << "\n";
        if (!env.w.empty()) out << "w = " << detail::format_list(env.w) << "\n";
        for (const auto& [user, curve] : env.g)
            out << "g" << user << " = " << detail::format_list(curve) << "\n";
        if (env.g_p0) out << "g_p0 = " << detail::format_double(*env.g_p0) << "\n";
        if (env.g_q) out << "g_q = " << detail::format_double(*env.g_q) << "\n";
        out << "\n[solver]\n";
        out << "tol = " << detail::format_double(solver.tol) << "\n";
        out << "max_iter = " << solver.max_iter << "\n";
        out << "eta0 = " << detail::format_double(solver.eta0) << "\n";
        out << "eps = " << detail::format_double(solver.eps) << "\n";
        out << "xi = " << detail::format_double(solver.xi) << "\n";
        out << "dual_max_iter = " << solver.dual_max_iter << "\n";
        out << "state_ceiling = " << solver.state_ceiling << "\n";
        out << "\n[learner]\n";
        out << "delta = " << detail::format_double(learner.delta) << "\n";
        out << "alpha = " << detail::format_double(learner.alpha) << "\n";
        out << "U = " << detail::format_double(learner.U) << "\n";
        out << "planner = " << learner.planner << "\n";
        out << "T = " << learner.T << "\n";
        out << "\n[run]\n";
        out << "seeds = " << run.seeds << "\n";
        out << "master_seed = " << run.master_seed << "\n";
        out << "out = " << run.out << "\n";
        out << "horizon = " << run.horizon << "\n";
        out << "curve_stride = " << run.curve_stride << "\n";
        out << "burn_in = " << run.burn_in << "\n";
        return out.str();
    }

    // Builds the validated environment description from [env].
    EnvConfig make_env() const {
        EnvConfig out;
        if (env.protocol == "arq")
            out.protocol = Protocol::Arq;
        else if (env.protocol == "harq")
            out.protocol = Protocol::Harq;
        else
            throw ValidationError("config: protocol must be 'arq' or 'harq'");
        out.r_max = env.r_max;
        out.delta_max = env.delta_max;
        out.lambda = env.lambda;
        const int m = env.users;
        if (m < 1) throw ValidationError("config: users must be >= 1");
        std::vector<double> weights = env.w;
        if (weights.empty()) weights.assign(static_cast<std::size_t>(m), 1.0);
        if (static_cast<int>(weights.size()) != m)
            throw ValidationError("config: w must list one weight per user");
        if (out.protocol == Protocol::Arq) {
            if (!env.g.empty() || env.g_p0 || env.g_q)
                throw ValidationError("config: g-curves are for HARQ; ARQ takes p = ...");
            if (static_cast<int>(env.p.size()) != m)
                throw ValidationError("config: p must list one error rate per user");
            for (int j = 0; j < m; ++j)
                out.channels.push_back({{env.p[static_cast<std::size_t>(j)]},
                                        weights[static_cast<std::size_t>(j)]});
        } else {
            if (!env.p.empty())
                throw ValidationError("config: p is for ARQ; HARQ takes g-curves");
            const bool family = env.g_p0.has_value() || env.g_q.has_value();
            if (family) {
                if (!env.g.empty())
                    throw ValidationError("config: give either explicit g-curves or the "
                                          "geometric family, not both");
                if (!env.g_p0 || !env.g_q)
                    throw ValidationError("config: geometric family needs both g_p0 and g_q");
                if (!(*env.g_q > 0.0 && *env.g_q <= 1.0))
                    throw ValidationError("config: g_q must lie in (0, 1]");
                std::vector<double> curve;
                double v = *env.g_p0;
                for (int r = 0; r <= env.r_max; ++r, v *= *env.g_q) curve.push_back(v);
                for (int j = 0; j < m; ++j)
                    out.channels.push_back({curve, weights[static_cast<std::size_t>(j)]});
            } else {
                for (int j = 1; j <= m; ++j) {
                    const auto it = env.g.find(j);
                    if (it == env.g.end())
                        throw ValidationError("config: missing curve g" + std::to_string(j));
                    out.channels.push_back({it->second, weights[static_cast<std::size_t>(j - 1)]});
                }
                if (static_cast<int>(env.g.size()) != m)
                    throw ValidationError("config: g-curves given for nonexistent users");
            }
        }
        out.validate();
        return out;
    }

    RviOptions make_rvi_options() const {
        RviOptions opts;
        opts.tol = solver.tol;
        opts.max_sweeps = solver.max_iter;
        opts.state_ceiling = solver.state_ceiling;
        return opts;
    }

    DualAscentOptions make_dual_options() const {
        DualAscentOptions opts;
        opts.eta0 = solver.eta0;
        opts.eps = solver.eps;
        opts.max_iters = solver.dual_max_iter;
        opts.rvi = make_rvi_options();
        return opts;
    }

    LearnerConfig make_learner_config() const {
        LearnerConfig lc;
        lc.confidence = learner.delta;
        lc.alpha = learner.alpha;
        lc.U = learner.U;
        lc.horizon = learner.T;
        if (learner.planner == "vi")
            lc.planner = LearnerConfig::Planner::Vi;
        else if (learner.planner == "whittle")
            lc.planner = LearnerConfig::Planner::Whittle;
        else
            throw ValidationError("config: planner must be 'vi' or 'whittle'");
        lc.state_ceiling = solver.state_ceiling;
        return lc;
    }

private:
    void apply(const std::string& section, const std::string& key, const std::string& value,
               int line) {
        using namespace detail;
        if (section == "env") {
            if (key == "users") env.users = static_cast<int>(parse_int(value, line));
            else if (key == "protocol") env.protocol = value;
            else if (key == "r_max") env.r_max = static_cast<int>(parse_int(value, line));
            else if (key == "delta_max") env.delta_max = static_cast<int>(parse_int(value, line));
            else if (key == "lambda") env.lambda = parse_double(value, line);
            else if (key == "p") env.p = parse_list(value, line);
            else if (key == "w") env.w = parse_list(value, line);
            else if (key == "g_p0") env.g_p0 = parse_double(value, line);
            else if (key == "g_q") env.g_q = parse_double(value, line);
            else if (key.size() > 1 && key[0] == 'g' &&
                     key.find_first_not_of("0123456789", 1) == std::string::npos)
                env.g[static_cast<int>(parse_int(key.substr(1), line))] = parse_list(value, line);
            else
                throw ValidationError("config line " + std::to_string(line) +
                                      ": unknown key '" + key + "' in [env]");
        } else if (section == "solver") {
            if (key == "tol") solver.tol = parse_double(value, line);
            else if (key == "max_iter") solver.max_iter = parse_int(value, line);
            else if (key == "eta0") solver.eta0 = parse_double(value, line);
            else if (key == "eps") solver.eps = parse_double(value, line);
            else if (key == "xi") solver.xi = parse_double(value, line);
            else if (key == "dual_max_iter")
                solver.dual_max_iter = static_cast<int>(parse_int(value, line));
            else if (key == "state_ceiling")
                solver.state_ceiling = static_cast<std::uint64_t>(parse_int(value, line));
            else
                throw ValidationError("config line " + std::to_string(line) +
                                      ": unknown key '" + key + "' in [solver]");
        } else if (section == "learner") {
            if (key == "delta") learner.delta = parse_double(value, line);
            else if (key == "alpha") learner.alpha = parse_double(value, line);
            else if (key == "U") learner.U = parse_double(value, line);
            else if (key == "planner") learner.planner = value;
            else if (key == "T") learner.T = static_cast<std::uint64_t>(parse_int(value, line));
            else
                throw ValidationError("config line " + std::to_string(line) +
                                      ": unknown key '" + key + "' in [learner]");
        } else {  // run
            if (key == "seeds") run.seeds = static_cast<int>(parse_int(value, line));
            else if (key == "master_seed")
                run.master_seed = static_cast<std::uint64_t>(parse_int(value, line));
            else if (key == "out") run.out = value;
            else if (key == "horizon")
                run.horizon = static_cast<std::uint64_t>(parse_int(value, line));
            else if (key == "curve_stride")
                run.curve_stride = static_cast<std::uint64_t>(parse_int(value, line));
            else if (key == "burn_in")
                run.burn_in = static_cast<std::uint64_t>(parse_int(value, line));
            else
                throw ValidationError("config line " + std::to_string(line) +
                                      ": unknown key '" + key + "' in [run]");
        }
    }
};

}  // namespace aoi
