// Command-line driver: simulate, sweep, compare, traffic-demo, validate.
#pragma once

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "simulator.hpp"
#include "traffic.hpp"

namespace seqsearch {

namespace detail {

struct CommonFlags {
    std::string config;
    std::optional<long> runs;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::string out;
};

inline void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--runs", f.runs, "Monte Carlo runs per point");
    cmd->add_option("--seed", f.seed, "base seed");
    cmd->add_option("--workers", f.workers, "worker threads");
    cmd->add_option("--out", f.out, "output CSV path (default: stdout)");
}

inline RunConfig load(const CommonFlags& f) {
    RunConfig cfg;
    if (!f.config.empty()) {
        std::ifstream in(f.config);
        if (!in) throw ConfigError("cannot read config file " + f.config);
        cfg = parse_config(in);
    }
    if (f.runs) {
        if (*f.runs < 1) throw ConfigError("--runs: must be positive");
        cfg.runs = *f.runs;
    }
    if (f.seed) cfg.seed = *f.seed;
    if (f.workers) {
        if (*f.workers < 1) throw ConfigError("--workers: must be positive");
        cfg.workers = *f.workers;
    }
    if (!f.out.empty()) cfg.out = f.out;
    return cfg;
}

inline int worker_count(const RunConfig& cfg) {
    if (cfg.workers) return *cfg.workers;
    if (const char* env = std::getenv("SEQSEARCH_WORKERS")) {
        try {
            const int w = parse_int<int>(env);
            if (w >= 1) return w;
        } catch (const std::exception&) {
        }
        throw ConfigError("SEQSEARCH_WORKERS: expected a positive integer, got '" + std::string(env) + "'");
    }
    return 1;
}

/// Writes to run.out / --out when set, else to `fallback`.
inline void emit(const RunConfig& cfg, std::ostream& fallback, const std::string& text) {
    if (cfg.out.empty()) {
        fallback << text;
        return;
    }
    std::ofstream f(cfg.out);
    if (!f) throw ConfigError("run.out: cannot write " + cfg.out);
    f << text;
    if (!f) throw ConfigError("run.out: write failed for " + cfg.out);
}

/// First level (in grid order) whose empirical error meets the target;
/// the last level when none does.
inline SweepPoint calibrate(const EnvConfig& env, PolicySpec spec, const std::vector<double>& grid, double target,
                            long runs, std::uint64_t seed, int workers, const DrawFn& draw) {
    SweepPoint last;
    for (double level : grid) {
        spec.criterion.level = level;
        last = run_monte_carlo(env, spec, runs, seed, workers, draw);
        if (last.p_error <= target) break;
    }
    return last;
}

}  // namespace detail

/// Runs one CLI invocation; `args` excludes the program name.
inline int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Sequential anomaly search simulator"};
    app.require_subcommand(1);

    detail::CommonFlags flags;
    auto* simulate = app.add_subcommand("simulate", "one Monte Carlo point at policy.level");
    auto* sweep_cmd = app.add_subcommand("sweep", "one point per sweep.grid level");
    auto* compare = app.add_subcommand("compare", "DS against baselines over sweep.grid");
    auto* traffic = app.add_subcommand("traffic-demo", "delay against flow count on synthetic entropy streams");
    auto* validate = app.add_subcommand("validate", "check a config and print it resolved");
    for (auto* cmd : {simulate, sweep_cmd, compare, traffic, validate}) detail::add_common(cmd, flags);

    std::vector<std::string> policies;
    compare->add_option("policies", policies, "policy tokens name[:statistic[:mode]]");
    std::string flows_in, entropy_out, flows_out;
    traffic->add_option("--flows", flows_in, "convert a flow CSV to per-interval entropies and exit")
        ->check(CLI::ExistingFile);
    traffic->add_option("--entropy-out", entropy_out, "entropy CSV path for --flows (default: stdout)");
    traffic->add_option("--emit-flows", flows_out, "also write synthesized packet histograms to this path");

    std::vector<std::string> argv_store{"seqsearch"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        RunConfig cfg = detail::load(flags);
        const int workers = detail::worker_count(cfg);

        if (validate->parsed()) {
            std::ostringstream os;
            os << print_config(cfg);
            const ResolvedPolicy r = resolve(cfg.env, cfg.policy);
            os << "# threshold " << fmt_double(r.threshold) << '\n';
            if (r.exploration_rate) os << "# i0 " << fmt_double(*r.exploration_rate) << '\n';
            os << "# max_slots " << r.max_slots << '\n';
            os << "# workers " << workers << '\n';
            out << os.str();
            return 0;
        }
        if (simulate->parsed()) {
            const SweepPoint p = run_monte_carlo(cfg.env, cfg.policy, cfg.runs, cfg.seed, workers);
            std::ostringstream os;
            write_sweep_csv(os, std::span(&p, 1));
            detail::emit(cfg, out, os.str());
            return 0;
        }
        if (sweep_cmd->parsed()) {
            if (cfg.grid.empty()) throw ConfigError("sweep.grid: empty grid");
            const auto pts = sweep(cfg.env, cfg.policy, cfg.grid, cfg.runs, cfg.seed, workers);
            std::ostringstream os;
            write_sweep_csv(os, pts);
            detail::emit(cfg, out, os.str());
            return 0;
        }
        if (compare->parsed()) {
            if (cfg.grid.empty()) throw ConfigError("sweep.grid: empty grid");
            if (policies.empty()) policies = {to_string(cfg.policy.name), cfg.baseline};
            std::vector<LabeledPoint> rows;
            for (const auto& token : policies) {
                PolicySpec spec;
                try {
                    spec = parse_policy_token(token, cfg.policy);
                } catch (const std::exception& e) {
                    throw ConfigError(std::string("policies: ") + e.what());
                }
                for (const auto& p : sweep(cfg.env, spec, cfg.grid, cfg.runs, cfg.seed, workers))
                    rows.push_back({{token}, p});
            }
            std::ostringstream os;
            const std::vector<std::string> labels{"policy"};
            write_labeled_csv(os, labels, rows);
            detail::emit(cfg, out, os.str());
            return 0;
        }
        if (traffic->parsed()) {
            const TrafficConfig& tc = cfg.traffic;
            if (!flows_in.empty()) {
                const auto intervals = ingest_flow_csv(flows_in);
                std::ostringstream os;
                write_entropy_csv(os, intervals);
                if (entropy_out.empty()) {
                    out << os.str();
                } else {
                    std::ofstream f(entropy_out);
                    if (!f) throw ConfigError("--entropy-out: cannot write " + entropy_out);
                    f << os.str();
                }
                return 0;
            }
            if (!flows_out.empty()) {
                const long packets = tc.packets > 0 ? tc.packets : 200;
                Rng rng(cfg.seed);
                const int flows = tc.cells.front();
                const auto streams = generate_flows(flows, 1, tc.model, 20, cfg.seed);
                std::vector<FlowInterval> intervals;
                for (int f = 1; f <= flows; ++f)
                    for (std::size_t i = 0; i < streams[static_cast<std::size_t>(f - 1)].size(); ++i)
                        intervals.push_back(synthesize_interval(f, static_cast<long>(i),
                                                                streams[static_cast<std::size_t>(f - 1)][i], packets, rng));
                std::ofstream f(flows_out);
                if (!f) throw ConfigError("--emit-flows: cannot write " + flows_out);
                write_flow_csv(f, intervals);
            }
            const DrawFn draw = entropy_draw(tc.model, tc.packets);
            PolicySpec ds = cfg.policy;
            ds.name = PolicyName::DS;
            PolicySpec glr = cfg.policy;
            glr.name = PolicyName::OpenLoopGlr;
            std::vector<LabeledPoint> rows;
            for (int flows : tc.cells) {
                const EnvConfig env = entropy_env(flows, tc.model, tc.sigma_floor);
                for (const PolicySpec& spec : {ds, glr}) {
                    const SweepPoint p =
                        tc.target_error
                            ? detail::calibrate(env, spec, tc.calibration_grid, *tc.target_error, cfg.runs, cfg.seed,
                                                workers, draw)
                            : run_monte_carlo(env, spec, cfg.runs, cfg.seed, workers, draw);
                    rows.push_back({{to_string(spec.name), std::to_string(flows)}, p});
                }
            }
            std::ostringstream os;
            const std::vector<std::string> labels{"policy", "M"};
            write_labeled_csv(os, labels, rows);
            detail::emit(cfg, out, os.str());
            return 0;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}

}  // namespace seqsearch
