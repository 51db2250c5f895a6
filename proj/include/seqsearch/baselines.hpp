// Reference policies: a randomized Chernoff-style search and an open-loop
// round-robin GLR test.
#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "policy.hpp"

namespace seqsearch {

/// Draws `k` distinct entries of `pool` uniformly (partial Fisher-Yates).
struct UniformPicker {
    Rng* rng;

    std::vector<int> operator()(std::vector<int> pool, std::size_t k) const {
        k = std::min(k, pool.size());
        for (std::size_t i = 0; i < k; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
            std::swap(pool[i], pool[pick(*rng)]);
        }
        pool.resize(k);
        return pool;
    }
};

/// Selection of the modified Chernoff test on top of the DS bookkeeping:
/// uniform random probing until exactly L estimates leave Θ⁰, then the
/// suspected cells (or a random subset of the others, when the guard favours
/// them) plus uniformly chosen companions.
template <class Picker>
Action chernoff_select(const DeterministicSearch& core, Picker&& pick) {
    const EnvConfig& env = core.env();
    const auto K = static_cast<std::size_t>(env.probes);
    std::vector<int> all(static_cast<std::size_t>(env.cells));
    std::iota(all.begin(), all.end(), 0);

    const auto h1 = core.h1_cells();
    if (!core.all_observed() || static_cast<int>(h1.size()) != env.anomalies)
        return Action{pick(all, K), Phase::Explore1};

    std::vector<int> rest;
    for (int m : all)
        if (!std::binary_search(h1.begin(), h1.end(), m)) rest.push_back(m);

    bool suspects_first = true;
    if (core.config().mode == SearchMode::CommonUnknownNull) suspects_first = core.abnormal_first().value_or(true);

    Action a{{}, Phase::Exploit};
    if (suspects_first) {
        a.probe_set.assign(h1.begin(), h1.begin() + static_cast<std::ptrdiff_t>(std::min(K, h1.size())));
        const auto extra = pick(rest, K - a.probe_set.size());
        a.probe_set.insert(a.probe_set.end(), extra.begin(), extra.end());
    } else {
        a.probe_set = pick(rest, K);
        for (int m : h1)
            if (a.probe_set.size() < K) a.probe_set.push_back(m);
    }
    return a;
}

/// Chernoff selection with the DS statistics and stopping rule.
class ChernoffSearch : public SearchPolicy {
public:
    ChernoffSearch(EnvConfig env, SearchConfig cfg, std::uint64_t seed)
        : core_(std::move(env), cfg), rng_(seed) {}

    Action select() override { return chernoff_select(core_, UniformPicker{&rng_}); }
    void record(const Action& action, std::span<const double> ys) override { core_.record(action, ys); }
    [[nodiscard]] Verdict check_stop() const override { return core_.check_stop(); }
    [[nodiscard]] long time() const override { return core_.time(); }
    [[nodiscard]] long explore1_slots() const override { return core_.explore1_slots(); }
    [[nodiscard]] long explore2_slots() const override { return core_.explore2_slots(); }

    [[nodiscard]] const DeterministicSearch& core() const { return core_; }

private:
    DeterministicSearch core_;
    Rng rng_;
};

/// Fixed round-robin probing with an independent GLR test per cell; the
/// first cell whose LGLLR against Θ⁰ reaches the threshold is declared.
/// Slots are tagged Explore1 since every one of them is round-robin.
class OpenLoopGlr : public SearchPolicy {
public:
    OpenLoopGlr(EnvConfig env, double threshold) : env_(std::move(env)), threshold_(threshold) {
        env_.validate();
        if (env_.anomalies != 1) throw std::invalid_argument("open-loop GLR supports a single anomaly");
        if (!(threshold_ > 0.0)) throw std::invalid_argument("stopping threshold must be positive");
        for (int m = 0; m < env_.cells; ++m) traces_.emplace_back(m, env_.family);
        // only feeds the unused adaptive numerator; any valid parameter works
        init_ = env_.space.indifference_midpoint(env_.true_theta0);
    }

    Action select() override {
        Action a{{}, Phase::Explore1};
        for (int i = 0; i < env_.probes; ++i) a.probe_set.push_back((cursor_ + i) % env_.cells);
        cursor_ = (cursor_ + env_.probes) % env_.cells;
        return a;
    }

    void record(const Action& action, std::span<const double> ys) override {
        if (ys.size() != action.probe_set.size())
            throw std::invalid_argument("one observation per probed cell expected");
        ++n_;
        ++explore1_;
        last_ = action.probe_set;
        for (std::size_t i = 0; i < ys.size(); ++i)
            traces_.at(static_cast<std::size_t>(last_[i])).ingest(ys[i], n_, init_, env_.family, env_.space.full());
    }

    [[nodiscard]] Verdict check_stop() const override {
        const StatisticSpec spec{StatisticKind::LGLLR, NullMode::Unknown};
        for (int m : last_) {
            const CellTrace& t = traces_[static_cast<std::size_t>(m)];
            if (score(t, spec, 0, ScoreContext{}, env_.family, env_.space) >= threshold_)
                return Verdict{std::vector<int>{m}};
        }
        return {};
    }

    [[nodiscard]] long time() const override { return n_; }
    [[nodiscard]] long explore1_slots() const override { return explore1_; }

private:
    EnvConfig env_;
    double threshold_;
    std::vector<CellTrace> traces_;
    std::vector<int> last_;
    Param init_;
    int cursor_ = 0;
    long n_ = 0;
    long explore1_ = 0;
};

}  // namespace seqsearch
