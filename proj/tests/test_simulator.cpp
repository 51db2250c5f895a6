#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "seqsearch/simulator.hpp"

using namespace seqsearch;

namespace {

EnvConfig gaussian_env(int cells, double shift = 1.0) {
    EnvConfig env;
    env.family = Family::gaussian(1.0);
    env.cells = cells;
    env.true_theta0 = scalar(0.0);
    env.true_theta1 = scalar(shift);
    env.space = ParameterSpace::split_at_midpoint(env.family, env.true_theta0, env.true_theta1);
    return env;
}

PolicySpec ds(double c) {
    PolicySpec s;
    s.criterion = {Criterion::Kind::Bayes, c};
    return s;
}

bool same(const EpisodeResult& a, const EpisodeResult& b) {
    return a.true_cells == b.true_cells && a.declared == b.declared && a.tau == b.tau &&
           a.explore1_slots == b.explore1_slots && a.explore2_slots == b.explore2_slots && a.correct == b.correct &&
           a.undecided == b.undecided && a.seed == b.seed;
}

bool same(const SweepPoint& a, const SweepPoint& b) {
    return a.level == b.level && a.criterion == b.criterion && a.runs == b.runs && a.p_error == b.p_error &&
           a.p_error_ci == b.p_error_ci && a.mean_tau == b.mean_tau && a.tau_ci == b.tau_ci &&
           a.mean_explore1 == b.mean_explore1 && a.mean_explore2 == b.mean_explore2 && a.undecided == b.undecided;
}

// Declares a uniformly chosen cell after one slot.
class RandomDeclare : public SearchPolicy {
public:
    RandomDeclare(int cells, std::uint64_t seed) : cells_(cells), rng_(seed) {}
    Action select() override { return Action{{0}, Phase::Explore1}; }
    void record(const Action&, std::span<const double>) override {
        ++n_;
        pick_ = static_cast<int>(std::uniform_int_distribution<int>(0, cells_ - 1)(rng_));
    }
    [[nodiscard]] Verdict check_stop() const override { return Verdict{std::vector<int>{pick_}}; }
    [[nodiscard]] long time() const override { return n_; }

private:
    int cells_;
    Rng rng_;
    long n_ = 0;
    int pick_ = 0;
};

}  // namespace

TEST(Episode, LargeSeparationStopsAlmostImmediately) {
    const EnvConfig env = gaussian_env(5, 50.0);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const EpisodeResult r = run_episode(env, ds(0.1), seed);
        EXPECT_TRUE(r.correct) << seed;
        EXPECT_LE(r.tau, env.cells + 3) << seed;
        EXPECT_GE(r.tau, 1);
    }
}

TEST(Episode, SameSeedSameResult) {
    const EnvConfig env = gaussian_env(5);
    EXPECT_TRUE(same(run_episode(env, ds(1e-3), 42), run_episode(env, ds(1e-3), 42)));
    PolicySpec ch = ds(1e-3);
    ch.name = PolicyName::Chernoff;
    EXPECT_TRUE(same(run_episode(env, ch, 42), run_episode(env, ch, 42)));
}

TEST(Episode, TruthComesFromTheHypothesisStream) {
    EnvConfig env = gaussian_env(5);
    env.prior = {0.02, 0.92, 0.02, 0.02, 0.02};
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng hyp = detail::stream_rng(seed, 0);
        const auto expect = draw_hypothesis(env, hyp);
        const EpisodeResult r = run_episode(env, ds(0.01), seed);
        ASSERT_EQ(r.true_cells, expect);
        hits += r.true_cells == std::vector<int>{1};
    }
    EXPECT_GT(hits, 170);
}

TEST(Episode, PriorFrequenciesAndDistinctAnomalies) {
    EnvConfig env = gaussian_env(4);
    env.prior = {0.1, 0.2, 0.3, 0.4};
    Rng rng(9);
    std::vector<int> counts(4);
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(draw_hypothesis(env, rng)[0])];
    for (std::size_t m = 0; m < 4; ++m) EXPECT_NEAR(counts[m] / static_cast<double>(n), env.prior[m], 0.006);
    env.anomalies = 3;
    for (int i = 0; i < 1000; ++i) {
        const auto cells = draw_hypothesis(env, rng);
        ASSERT_EQ(cells.size(), 3u);
        ASSERT_TRUE(std::adjacent_find(cells.begin(), cells.end()) == cells.end());
        ASSERT_TRUE(std::is_sorted(cells.begin(), cells.end()));
    }
}

TEST(Episode, SlotCapGivesUndecidedError) {
    PolicySpec spec = ds(1e-6);
    spec.max_slots = 3;
    const EpisodeResult r = run_episode(gaussian_env(5), spec, 1);
    EXPECT_TRUE(r.undecided);
    EXPECT_FALSE(r.correct);
    EXPECT_TRUE(r.declared.empty());
    EXPECT_EQ(r.tau, 3);
    const EpisodeResult rs[] = {r};
    EXPECT_EQ(aggregate(rs).p_error, 1.0);
    EXPECT_EQ(aggregate(rs).undecided, 1);
}

TEST(Episode, CustomDrawReplacesTheSampler) {
    const EnvConfig env = gaussian_env(3);
    const DrawFn draw = [](bool anomalous, Rng&) { return anomalous ? 1.0 : 0.0; };
    const EpisodeResult r = run_episode(env, ds(0.01), 7, draw);
    EXPECT_TRUE(r.correct);
    // deterministic data: each abnormal observation adds ln f(1|θ̂)/f(1|0)
    EXPECT_LT(r.tau, 20);
}

TEST(Resolve, DefaultSlotCapAndExplorationRate) {
    const EnvConfig env = gaussian_env(5);
    const ResolvedPolicy r = resolve(env, ds(1e-4));
    EXPECT_NEAR(r.threshold, -std::log(1e-4), 1e-12);
    EXPECT_EQ(r.max_slots, static_cast<long>(std::ceil(200.0 * -std::log(1e-4) / 0.5)));
    EXPECT_FALSE(r.exploration_rate.has_value());
    PolicySpec common = ds(0.5);
    common.mode = SearchMode::CommonUnknownNull;
    common.statistic = StatisticKind::MALLR;
    const ResolvedPolicy rc = resolve(env, common);
    EXPECT_NEAR(*rc.exploration_rate, 0.125, 1e-9);
    EXPECT_EQ(rc.max_slots, 500);  // the 100 M floor
    common.exploration_rate = -1.0;
    EXPECT_THROW(resolve(env, common), std::invalid_argument);
}

TEST(MonteCarlo, SingleRunEqualsEpisode) {
    const EnvConfig env = gaussian_env(5);
    const SweepPoint p = run_monte_carlo(env, ds(0.01), 1, 77);
    const EpisodeResult r = run_episode(env, ds(0.01), 77);
    EXPECT_EQ(p.runs, 1);
    EXPECT_EQ(p.p_error, r.correct ? 0.0 : 1.0);
    EXPECT_EQ(p.mean_tau, static_cast<double>(r.tau));
    EXPECT_EQ(p.mean_explore1, static_cast<double>(r.explore1_slots));
    EXPECT_EQ(p.tau_ci, 0.0);
}

TEST(MonteCarlo, BinomialConfidenceHalfWidth) {
    std::vector<EpisodeResult> rs(10000);
    for (std::size_t i = 0; i < rs.size(); ++i) {
        rs[i].tau = static_cast<long>(i % 7);
        rs[i].correct = i % 20 != 0;
    }
    const SweepPoint p = aggregate(rs);
    EXPECT_DOUBLE_EQ(p.p_error, 0.05);
    EXPECT_NEAR(p.p_error_ci, 0.00427, 5e-6);
    double mean = 0, ss = 0;
    for (const auto& r : rs) mean += static_cast<double>(r.tau);
    mean /= 10000.0;
    for (const auto& r : rs) ss += (r.tau - mean) * (r.tau - mean);
    EXPECT_NEAR(p.tau_ci, 1.96 * std::sqrt(ss / 9999.0 / 10000.0), 1e-12);
}

TEST(MonteCarlo, WorkerCountDoesNotChangeResults) {
    EnvConfig env = gaussian_env(5);
    env.probes = 2;
    PolicySpec spec = ds(1e-3);
    spec.mode = SearchMode::CommonUnknownNull;
    spec.statistic = StatisticKind::MALLR;
    const SweepPoint one = run_monte_carlo(env, spec, 400, 1000, 1);
    const SweepPoint eight = run_monte_carlo(env, spec, 400, 1000, 8);
    EXPECT_TRUE(same(one, eight));
    spec.name = PolicyName::Chernoff;
    EXPECT_TRUE(same(run_monte_carlo(env, spec, 300, 5, 1), run_monte_carlo(env, spec, 300, 5, 3)));
}

TEST(MonteCarlo, EpisodeErrorsPropagate) {
    EXPECT_THROW(run_batch(10, 0, 4,
                           [](std::uint64_t s) -> EpisodeResult {
                               if (s == 6) throw std::runtime_error("boom");
                               return {};
                           }),
                 std::runtime_error);
    EXPECT_THROW(run_batch(0, 0, 1, [](std::uint64_t) { return EpisodeResult{}; }), std::invalid_argument);
}

TEST(MonteCarlo, RandomDeclarationErrsAtChanceRate) {
    const EnvConfig env = gaussian_env(5);
    const long n = 20000;
    const auto results = run_batch(n, 3, 2, [&](std::uint64_t seed) {
        return run_episode(env, [&](std::uint64_t s) { return std::make_unique<RandomDeclare>(5, s); }, 100, seed);
    });
    const SweepPoint p = aggregate(results);
    EXPECT_NEAR(p.p_error, 0.8, p.p_error_ci * 1.5);
    EXPECT_EQ(p.mean_tau, 1.0);
}

TEST(Sweep, DelayGrowsWithThreshold) {
    const EnvConfig env = gaussian_env(5);
    const double grid[] = {1e-1, 1e-2, 1e-3};
    const auto pts = sweep(env, ds(0.0), grid, 2000, 1);
    ASSERT_EQ(pts.size(), 3u);
    EXPECT_LT(pts[0].mean_tau, pts[1].mean_tau);
    EXPECT_LT(pts[1].mean_tau, pts[2].mean_tau);
    EXPECT_LE(pts[2].p_error - pts[2].p_error_ci, 4e-3);
    EXPECT_EQ(pts[1].level, 1e-2);
    EXPECT_THROW(sweep(env, ds(0.0), std::span<const double>{}, 10, 1), std::invalid_argument);
}

TEST(Sweep, ErrorAtDelayInterpolates) {
    std::vector<SweepPoint> pts(3);
    pts[0].mean_tau = 30, pts[0].p_error = 0.1;
    pts[1].mean_tau = 10, pts[1].p_error = 0.3;
    pts[2].mean_tau = 20, pts[2].p_error = 0.2;
    EXPECT_NEAR(*error_at_delay(pts, 15.0), 0.25, 1e-12);
    EXPECT_NEAR(*error_at_delay(pts, 30.0), 0.1, 1e-12);
    EXPECT_FALSE(error_at_delay(pts, 31.0).has_value());
    EXPECT_FALSE(error_at_delay(pts, 5.0).has_value());
}

TEST(Csv, SweepSchemaAndRows) {
    SweepPoint p;
    p.level = 0.001;
    p.criterion = "bayes";
    p.runs = 10;
    p.p_error = 0.1;
    p.p_error_ci = 0.185;
    p.mean_tau = 12.5;
    p.tau_ci = 1.25;
    p.mean_explore1 = 5;
    p.mean_explore2 = 0;
    p.undecided = 0;
    std::ostringstream os;
    const SweepPoint pts[] = {p, p};
    write_sweep_csv(os, pts);
    EXPECT_EQ(os.str(),
              "threshold,criterion,runs,p_error,p_error_ci,mean_tau,tau_ci,mean_explore1,mean_explore2,undecided\n"
              "0.001,bayes,10,0.1,0.185,12.5,1.25,5,0,0\n"
              "0.001,bayes,10,0.1,0.185,12.5,1.25,5,0,0\n");
}

TEST(Csv, LabeledRowsCarryPolicyColumn) {
    SweepPoint p;
    p.criterion = "frequentist";
    const std::vector<std::string> names{"policy", "M"};
    const std::vector<LabeledPoint> rows{{{"ds", "5"}, p}, {{"openloop-glr", "5"}, p}};
    std::ostringstream os;
    write_labeled_csv(os, names, rows);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, std::string("policy,M,") + kSweepHeader);
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 11);
    }
    EXPECT_EQ(n, 2);
    const std::vector<LabeledPoint> bad{{{"ds"}, p}};
    EXPECT_THROW(write_labeled_csv(os, names, bad), std::invalid_argument);
}
