// Episode runner, Monte Carlo aggregation and CSV output.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <iomanip>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "baselines.hpp"
#include "policy.hpp"

namespace seqsearch {

enum class PolicyName { DS, Chernoff, OpenLoopGlr };

inline std::string to_string(PolicyName p) {
    switch (p) {
        case PolicyName::DS: return "ds";
        case PolicyName::Chernoff: return "chernoff";
        case PolicyName::OpenLoopGlr: return "openloop-glr";
    }
    return "?";
}

struct PolicySpec {
    PolicyName name = PolicyName::DS;
    SearchMode mode = SearchMode::KnownNull;
    StatisticKind statistic = StatisticKind::LALLR;
    Criterion criterion;
    double epsilon = 0.05;
    std::optional<double> exploration_rate;  // I₀ override
    std::vector<Param> exploration_grid;     // empty: {true θ¹}
    std::optional<Param> init_estimate;
    std::optional<long> max_slots;
};

/// A PolicySpec with everything that is constant across episodes computed.
struct ResolvedPolicy {
    PolicySpec spec;
    double threshold = 0.0;
    std::optional<double> exploration_rate;
    long max_slots = 0;
};

inline ResolvedPolicy resolve(const EnvConfig& env, const PolicySpec& spec) {
    env.validate();
    ResolvedPolicy r;
    r.spec = spec;
    r.threshold = threshold_for(spec.criterion, env.cells);
    if (!(r.threshold > 0.0)) throw std::invalid_argument("policy.level: threshold must be positive");
    if (!(spec.epsilon >= 0.0)) throw std::invalid_argument("policy.epsilon: must be non-negative");
    if (spec.name != PolicyName::OpenLoopGlr && spec.mode == SearchMode::CommonUnknownNull) {
        if (spec.exploration_rate) {
            r.exploration_rate = spec.exploration_rate;
        } else {
            std::vector<Param> grid = spec.exploration_grid;
            if (grid.empty()) grid.push_back(env.true_theta1);
            r.exploration_rate = exploration_rate_I0(env.family, env.true_theta0, grid);
        }
        if (!(*r.exploration_rate > 0.0)) throw std::invalid_argument("policy.i0: must be positive");
    }
    if (spec.max_slots) {
        if (*spec.max_slots < 1) throw std::invalid_argument("policy.max_slots: must be positive");
        r.max_slots = *spec.max_slots;
    } else {
        const double d = kl_divergence(env.family, env.true_theta1, env.true_theta0);
        const double cap = 200.0 * r.threshold / d;
        r.max_slots = std::max<long>(100L * env.cells, std::isfinite(cap) ? static_cast<long>(std::ceil(cap)) : 0L);
    }
    return r;
}

inline SearchConfig search_config(const ResolvedPolicy& r) {
    SearchConfig c;
    c.mode = r.spec.mode;
    c.statistic = r.spec.statistic;
    c.threshold = r.threshold;
    c.epsilon = r.spec.epsilon;
    c.exploration_rate = r.exploration_rate;
    c.init_estimate = r.spec.init_estimate;
    return c;
}

inline std::unique_ptr<SearchPolicy> make_policy(const EnvConfig& env, const ResolvedPolicy& r,
                                                 std::uint64_t policy_seed) {
    switch (r.spec.name) {
        case PolicyName::DS: return std::make_unique<DeterministicSearch>(env, search_config(r));
        case PolicyName::Chernoff: return std::make_unique<ChernoffSearch>(env, search_config(r), policy_seed);
        case PolicyName::OpenLoopGlr: return std::make_unique<OpenLoopGlr>(env, r.threshold);
    }
    throw std::invalid_argument("unknown policy");
}

/// Replaces the family sampler; receives whether the probed cell is anomalous.
using DrawFn = std::function<double(bool anomalous, Rng&)>;

struct EpisodeResult {
    std::vector<int> true_cells;
    std::vector<int> declared;  // empty when the slot cap was hit
    long tau = 0;
    long explore1_slots = 0;
    long explore2_slots = 0;
    bool correct = false;
    bool undecided = false;
    std::uint64_t seed = 0;
};

namespace detail {

inline Rng stream_rng(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
    return Rng(seq);
}

}  // namespace detail

/// Anomalous cells drawn from the prior (sequentially without replacement
/// when L > 1), returned ascending.
inline std::vector<int> draw_hypothesis(const EnvConfig& env, Rng& rng) {
    std::vector<double> weights = env.resolved_prior();
    std::vector<int> out;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int l = 0; l < env.anomalies; ++l) {
        double total = 0.0;
        for (double w : weights) total += w;
        double u = unit(rng) * total;
        int pick = -1;
        for (std::size_t m = 0; m < weights.size(); ++m) {
            if (weights[m] <= 0.0) continue;
            pick = static_cast<int>(m);
            if (u < weights[m]) break;
            u -= weights[m];
        }
        out.push_back(pick);
        weights[static_cast<std::size_t>(pick)] = 0.0;
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Runs one policy instance against a fixed truth until it stops or the
/// slot cap is reached.
inline EpisodeResult run_episode_with(SearchPolicy& policy, const EnvConfig& env, std::vector<int> truth,
                                      Rng& obs_rng, long max_slots, const DrawFn& draw = {}) {
    EpisodeResult res;
    res.true_cells = std::move(truth);
    Sampler sampler(env.family);
    std::vector<double> ys;
    while (true) {
        if (policy.time() >= max_slots) {
            res.undecided = true;
            break;
        }
        const Action a = policy.select();
        ys.clear();
        for (int m : a.probe_set) {
            const bool anomalous = std::binary_search(res.true_cells.begin(), res.true_cells.end(), m);
            ys.push_back(draw ? draw(anomalous, obs_rng)
                              : sampler(anomalous ? env.true_theta1 : env.true_theta0, obs_rng));
        }
        policy.record(a, ys);
        const Verdict v = policy.check_stop();
        if (v.stopped()) {
            res.declared = *v.declared;
            std::sort(res.declared.begin(), res.declared.end());
            break;
        }
    }
    res.tau = policy.time();
    res.explore1_slots = policy.explore1_slots();
    res.explore2_slots = policy.explore2_slots();
    res.correct = !res.undecided && res.declared == res.true_cells;
    return res;
}

/// Builds a policy for one episode from its policy-stream seed.
using PolicyFactory = std::function<std::unique_ptr<SearchPolicy>(std::uint64_t policy_seed)>;

inline EpisodeResult run_episode(const EnvConfig& env, const PolicyFactory& factory, long max_slots,
                                 std::uint64_t seed, const DrawFn& draw = {}) {
    Rng hyp = detail::stream_rng(seed, 0);
    Rng obs = detail::stream_rng(seed, 1);
    const std::uint64_t policy_seed = detail::stream_rng(seed, 2)();
    auto truth = draw_hypothesis(env, hyp);
    auto policy = factory(policy_seed);
    EpisodeResult res = run_episode_with(*policy, env, std::move(truth), obs, max_slots, draw);
    res.seed = seed;
    return res;
}

inline EpisodeResult run_episode(const EnvConfig& env, const ResolvedPolicy& r, std::uint64_t seed,
                                 const DrawFn& draw = {}) {
    return run_episode(env, [&](std::uint64_t s) { return make_policy(env, r, s); }, r.max_slots, seed, draw);
}

inline EpisodeResult run_episode(const EnvConfig& env, const PolicySpec& spec, std::uint64_t seed,
                                 const DrawFn& draw = {}) {
    return run_episode(env, resolve(env, spec), seed, draw);
}

struct SweepPoint {
    double level = 0.0;
    std::string criterion;
    long runs = 0;
    double p_error = 0.0;
    double p_error_ci = 0.0;
    double mean_tau = 0.0;
    double tau_ci = 0.0;
    double mean_explore1 = 0.0;
    double mean_explore2 = 0.0;
    long undecided = 0;
};

/// Aggregates in the given order; 95% normal-approximation half-widths.
inline SweepPoint aggregate(std::span<const EpisodeResult> results) {
    SweepPoint p;
    p.runs = static_cast<long>(results.size());
    if (results.empty()) return p;
    const double n = static_cast<double>(results.size());
    double errors = 0, tau = 0, tau_sq = 0, e1 = 0, e2 = 0;
    for (const EpisodeResult& r : results) {
        errors += r.correct ? 0.0 : 1.0;
        tau += static_cast<double>(r.tau);
        e1 += static_cast<double>(r.explore1_slots);
        e2 += static_cast<double>(r.explore2_slots);
        p.undecided += r.undecided ? 1 : 0;
    }
    p.p_error = errors / n;
    p.mean_tau = tau / n;
    p.mean_explore1 = e1 / n;
    p.mean_explore2 = e2 / n;
    for (const EpisodeResult& r : results) tau_sq += std::pow(static_cast<double>(r.tau) - p.mean_tau, 2);
    p.p_error_ci = 1.96 * std::sqrt(p.p_error * (1.0 - p.p_error) / n);
    p.tau_ci = results.size() > 1 ? 1.96 * std::sqrt(tau_sq / (n - 1.0) / n) : 0.0;
    return p;
}

/// Episode i uses seed base_seed + i; results are reduced in index order so
/// the output does not depend on the worker count.
inline std::vector<EpisodeResult> run_batch(long n_runs, std::uint64_t base_seed, int workers,
                                            const std::function<EpisodeResult(std::uint64_t)>& episode) {
    if (n_runs < 1) throw std::invalid_argument("run.runs: need at least one run");
    if (workers < 1) throw std::invalid_argument("run.workers: need at least one worker");
    std::vector<EpisodeResult> results(static_cast<std::size_t>(n_runs));
    std::atomic<long> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto work = [&] {
        while (true) {
            const long i = next.fetch_add(1);
            if (i >= n_runs) return;
            try {
                results[static_cast<std::size_t>(i)] = episode(base_seed + static_cast<std::uint64_t>(i));
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) failure = std::current_exception();
                next = n_runs;
                return;
            }
        }
    };
    const int n_threads = static_cast<int>(std::min<long>(workers, n_runs));
    if (n_threads == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
    }
    if (failure) std::rethrow_exception(failure);
    return results;
}

inline SweepPoint run_monte_carlo(const EnvConfig& env, const PolicySpec& spec, long n_runs,
                                  std::uint64_t base_seed, int workers = 1, const DrawFn& draw = {}) {
    const ResolvedPolicy r = resolve(env, spec);
    const auto results =
        run_batch(n_runs, base_seed, workers, [&](std::uint64_t seed) { return run_episode(env, r, seed, draw); });
    SweepPoint p = aggregate(results);
    p.level = spec.criterion.level;
    p.criterion = to_string(spec.criterion.kind);
    return p;
}

/// One Monte Carlo point per criterion level.
inline std::vector<SweepPoint> sweep(const EnvConfig& env, PolicySpec spec, std::span<const double> levels,
                                     long n_runs, std::uint64_t base_seed, int workers = 1,
                                     const DrawFn& draw = {}) {
    if (levels.empty()) throw std::invalid_argument("sweep.grid: empty grid");
    std::vector<SweepPoint> out;
    for (double level : levels) {
        spec.criterion.level = level;
        out.push_back(run_monte_carlo(env, spec, n_runs, base_seed, workers, draw));
    }
    return out;
}

/// Linear interpolation of p_error at a given mean delay along a sweep
/// (points sorted by mean_tau); nullopt outside the covered range.
inline std::optional<double> error_at_delay(std::vector<SweepPoint> pts, double tau) {
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.mean_tau < b.mean_tau; });
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const auto& a = pts[i - 1];
        const auto& b = pts[i];
        if (tau < a.mean_tau || tau > b.mean_tau) continue;
        if (b.mean_tau == a.mean_tau) return a.p_error;
        const double w = (tau - a.mean_tau) / (b.mean_tau - a.mean_tau);
        return a.p_error + w * (b.p_error - a.p_error);
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* kSweepHeader =
    "threshold,criterion,runs,p_error,p_error_ci,mean_tau,tau_ci,mean_explore1,mean_explore2,undecided";

inline std::string format_number(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

inline std::string csv_fields(const SweepPoint& p) {
    std::ostringstream os;
    os << format_number(p.level) << ',' << p.criterion << ',' << p.runs << ',' << format_number(p.p_error) << ','
       << format_number(p.p_error_ci) << ',' << format_number(p.mean_tau) << ',' << format_number(p.tau_ci) << ','
       << format_number(p.mean_explore1) << ',' << format_number(p.mean_explore2) << ',' << p.undecided;
    return os.str();
}

inline void write_sweep_csv(std::ostream& os, std::span<const SweepPoint> pts) {
    os << kSweepHeader << '\n';
    for (const auto& p : pts) os << csv_fields(p) << '\n';
}

struct LabeledPoint {
    std::vector<std::string> labels;
    SweepPoint point;
};

/// Sweep rows prefixed by label columns, e.g. {"policy"} or {"policy", "M"}.
inline void write_labeled_csv(std::ostream& os, std::span<const std::string> label_names,
                              std::span<const LabeledPoint> rows) {
    for (const auto& name : label_names) os << name << ',';
    os << kSweepHeader << '\n';
    for (const auto& row : rows) {
        if (row.labels.size() != label_names.size()) throw std::invalid_argument("label count mismatch");
        for (const auto& l : row.labels) os << l << ',';
        os << csv_fields(row.point) << '\n';
    }
}

}  // namespace seqsearch
