// Deterministic search: round-robin exploration until exactly L cells have
// estimates outside Θ⁰, then probing driven by the estimated KL rates, with a
// sequential threshold test on the per-cell statistics.
#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "estimation.hpp"
#include "model.hpp"
#include "statistics.hpp"

namespace seqsearch {

enum class SearchMode { NoSideInfo, KnownNull, CommonUnknownNull };
enum class Phase { Explore1, Explore2, Exploit };

inline std::string to_string(SearchMode m) {
    switch (m) {
        case SearchMode::NoSideInfo: return "no-side-info";
        case SearchMode::KnownNull: return "known-null";
        case SearchMode::CommonUnknownNull: return "common-unknown-null";
    }
    return "?";
}

inline NullMode null_mode_for(SearchMode m) {
    switch (m) {
        case SearchMode::NoSideInfo: return NullMode::Unknown;
        case SearchMode::KnownNull: return NullMode::KnownTheta0;
        case SearchMode::CommonUnknownNull: return NullMode::PooledTheta0;
    }
    return NullMode::Unknown;
}

struct Action {
    std::vector<int> probe_set;
    Phase phase = Phase::Explore1;
};

struct Verdict {
    std::optional<std::vector<int>> declared;  // nullopt: continue sampling

    [[nodiscard]] bool stopped() const { return declared.has_value(); }
};

struct Criterion {
    enum class Kind { Bayes, Frequentist };
    Kind kind = Kind::Bayes;
    double level = 0.01;  // c for Bayes, α for Frequentist

    friend bool operator==(const Criterion&, const Criterion&) = default;
};

inline std::string to_string(Criterion::Kind k) { return k == Criterion::Kind::Bayes ? "bayes" : "frequentist"; }

/// -ln c (Bayes) or ln((M-1)/α) (frequentist).
inline double threshold_for(const Criterion& crit, int cells) {
    if (crit.kind == Criterion::Kind::Bayes) {
        if (!(crit.level > 0.0 && crit.level <= 1.0)) throw std::domain_error("sampling cost c must lie in (0,1)");
        return -std::log(crit.level);
    }
    if (!(crit.level > 0.0 && crit.level < 1.0)) throw std::domain_error("error level alpha must lie in (0,1)");
    if (cells < 2) throw std::domain_error("frequentist threshold needs at least two cells");
    return std::log(static_cast<double>(cells - 1) / crit.level);
}

/// Interface shared by the search engine and the reference policies.
class SearchPolicy {
public:
    virtual ~SearchPolicy() = default;
    virtual Action select() = 0;
    /// Feeds the observations of the probed cells (same order as the action)
    /// and advances the clock by one slot.
    virtual void record(const Action& action, std::span<const double> observations) = 0;
    [[nodiscard]] virtual Verdict check_stop() const = 0;
    [[nodiscard]] virtual long time() const = 0;
    [[nodiscard]] virtual long explore1_slots() const { return 0; }
    [[nodiscard]] virtual long explore2_slots() const { return 0; }
};

struct SearchConfig {
    SearchMode mode = SearchMode::KnownNull;
    StatisticKind statistic = StatisticKind::LALLR;
    double threshold = 4.605170185988091;
    /// Minimum-sample floor factor; common-unknown-null mode only.
    double epsilon = 0.05;
    /// Exploration rate I₀ for the logarithmic exploration schedule.
    std::optional<double> exploration_rate;
    /// θ̂_m(0), used by the first term of the adaptive numerators.
    std::optional<Param> init_estimate;
};

class DeterministicSearch : public SearchPolicy {
public:
    DeterministicSearch(EnvConfig env, SearchConfig cfg) : env_(std::move(env)), cfg_(cfg) {
        env_.validate();
        spec_ = StatisticSpec{cfg_.statistic, null_mode_for(cfg_.mode)};
        spec_.validate();
        if (!(cfg_.threshold > 0.0)) throw std::invalid_argument("stopping threshold must be positive");
        if (cfg_.mode == SearchMode::KnownNull) ctx_.known_theta0 = env_.true_theta0;
        if (!cfg_.init_estimate) {
            const Param mid{0.5 * (env_.true_theta0.first + env_.true_theta1.first),
                            0.5 * (env_.true_theta0.second + env_.true_theta1.second)};
            cfg_.init_estimate = env_.space.indifference_midpoint(mid);
        }
        if (cfg_.mode == SearchMode::CommonUnknownNull) {
            if (!cfg_.exploration_rate) {
                const Param grid[] = {env_.true_theta1};
                cfg_.exploration_rate = exploration_rate_I0(env_.family, env_.true_theta0, grid);
            }
            if (!(*cfg_.exploration_rate > 0.0)) throw std::invalid_argument("exploration rate I0 must be positive");
            floor_ = static_cast<long>(std::ceil(cfg_.epsilon * cfg_.threshold));
        }
        traces_.reserve(static_cast<std::size_t>(env_.cells));
        for (int m = 0; m < env_.cells; ++m) traces_.emplace_back(m, env_.family);
    }

    Action select() override {
        const int M = env_.cells, K = env_.probes;
        if (!pass_pending_.empty()) return take_pending();

        const auto h1 = h1_cells();
        if (!all_observed() || static_cast<int>(h1.size()) != env_.anomalies) {
            Action a{{}, Phase::Explore1};
            for (int i = 0; i < K; ++i) a.probe_set.push_back((rr_cursor_ + i) % M);
            rr_cursor_ = (rr_cursor_ + K) % M;
            return a;
        }
        if (exploration_due()) {
            for (int i = 0; i < M; ++i) pass_pending_.push_back((rr_cursor_ + i) % M);
            rr_cursor_ = (rr_cursor_ + M) % M;
            explore2_count_ += M;
            return take_pending();
        }
        return exploit(h1);
    }

    void record(const Action& action, std::span<const double> observations) override {
        if (observations.size() != action.probe_set.size())
            throw std::invalid_argument("one observation per probed cell expected");
        ++n_;
        for (std::size_t i = 0; i < observations.size(); ++i) {
            const auto m = static_cast<std::size_t>(action.probe_set[i]);
            traces_.at(m).ingest(observations[i], n_, *cfg_.init_estimate, env_.family, env_.space.full());
        }
        if (action.phase == Phase::Explore1) ++explore1_;
        if (action.phase == Phase::Explore2) ++explore2_;
        refresh_pooled();
    }

    [[nodiscard]] Verdict check_stop() const override {
        if (!all_observed()) return {};
        const auto h1 = h1_cells();
        if (static_cast<int>(h1.size()) != env_.anomalies) return {};
        if (cfg_.mode == SearchMode::CommonUnknownNull && n_ < floor_) return {};

        double reject_normal = kInf;  // L-th highest S^(0) among the suspected cells
        for (int m : h1) reject_normal = std::min(reject_normal, score_of(m, 0));
        double stat = reject_normal;
        if (cfg_.mode == SearchMode::CommonUnknownNull || env_.anomalies > 1) {
            double reject_abnormal = kInf;
            for (int m = 0; m < env_.cells; ++m)
                if (!std::binary_search(h1.begin(), h1.end(), m))
                    reject_abnormal = std::min(reject_abnormal, score_of(m, 1));
            stat += reject_abnormal;
        }
        if (stat >= cfg_.threshold) return Verdict{h1};
        return {};
    }

    [[nodiscard]] long time() const override { return n_; }
    [[nodiscard]] long explore1_slots() const override { return explore1_; }
    [[nodiscard]] long explore2_slots() const override { return explore2_; }

    /// Cells whose current MLE lies outside Θ⁰, ascending. Cells without
    /// observations are never members.
    [[nodiscard]] std::vector<int> h1_cells() const {
        std::vector<int> out;
        for (const CellTrace& t : traces_)
            if (t.mle() && !env_.space.theta0().contains(*t.mle())) out.push_back(t.cell_id());
        return out;
    }

    [[nodiscard]] bool all_observed() const {
        return std::none_of(traces_.begin(), traces_.end(), [](const CellTrace& t) { return t.empty(); });
    }

    /// Cells outside `suspects` ordered by ascending S^(1); ties go to the
    /// lower index.
    [[nodiscard]] std::vector<int> ranked_normals(std::span<const int> suspects) const {
        std::vector<std::pair<double, int>> keyed;
        for (int m = 0; m < env_.cells; ++m)
            if (std::find(suspects.begin(), suspects.end(), m) == suspects.end())
                keyed.emplace_back(score_of(m, 1), m);
        std::stable_sort(keyed.begin(), keyed.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<int> out;
        for (const auto& [s, m] : keyed) out.push_back(m);
        return out;
    }

    /// Estimates entering the selection guard: (θ̂⁽⁰⁾, θ̂⁽¹⁾), with the known
    /// null parameter in known-null mode.
    [[nodiscard]] std::optional<std::pair<Param, Param>> guard_estimates() const {
        const auto& null = cfg_.mode == SearchMode::KnownNull ? ctx_.known_theta0 : ctx_.pooled_theta0;
        if (!null || !ctx_.pooled_theta1) return std::nullopt;
        return std::pair{*null, *ctx_.pooled_theta1};
    }

    /// D(θ̂⁽¹⁾‖θ̂⁽⁰⁾) >= D(θ̂⁽⁰⁾‖θ̂⁽¹⁾)/(M-1): true favours probing the
    /// suspected cell, false the least-rejected normal cells.
    [[nodiscard]] std::optional<bool> abnormal_first() const {
        const auto est = guard_estimates();
        if (!est) return std::nullopt;
        const auto& [t0, t1] = *est;
        return kl_divergence(env_.family, t1, t0) >=
               kl_divergence(env_.family, t0, t1) / static_cast<double>(env_.cells - 1);
    }

    /// Whether a round-robin pass is owed: N_O < (2 / I₀) ln n.
    [[nodiscard]] bool exploration_due() const {
        if (cfg_.mode != SearchMode::CommonUnknownNull || n_ < 1) return false;
        return static_cast<double>(explore2_count_) < 2.0 / *cfg_.exploration_rate * std::log(static_cast<double>(n_));
    }

    [[nodiscard]] double score_of(int cell, int r) const {
        return score(traces_.at(static_cast<std::size_t>(cell)), spec_, r, ctx_, env_.family, env_.space);
    }

    [[nodiscard]] const EnvConfig& env() const { return env_; }
    [[nodiscard]] const SearchConfig& config() const { return cfg_; }
    [[nodiscard]] const StatisticSpec& statistic() const { return spec_; }
    [[nodiscard]] const ScoreContext& context() const { return ctx_; }
    [[nodiscard]] std::span<const CellTrace> traces() const { return traces_; }
    [[nodiscard]] int rr_cursor() const { return rr_cursor_; }
    [[nodiscard]] long exploration2_count() const { return explore2_count_; }
    [[nodiscard]] long min_samples_floor() const { return floor_; }

    /// Test hook: overrides the exploration-2 observation count N_O.
    void set_exploration2_count(long v) { explore2_count_ = v; }

private:
    Action take_pending() {
        Action a{{}, Phase::Explore2};
        const auto k = std::min<std::size_t>(static_cast<std::size_t>(env_.probes), pass_pending_.size());
        a.probe_set.assign(pass_pending_.begin(), pass_pending_.begin() + static_cast<std::ptrdiff_t>(k));
        pass_pending_.erase(pass_pending_.begin(), pass_pending_.begin() + static_cast<std::ptrdiff_t>(k));
        // the last slot of a pass is topped up with the cells that follow in
        // round-robin order, so every slot still probes K cells
        for (int m = rr_cursor_; static_cast<int>(a.probe_set.size()) < env_.probes; m = (m + 1) % env_.cells)
            if (std::find(a.probe_set.begin(), a.probe_set.end(), m) == a.probe_set.end()) a.probe_set.push_back(m);
        return a;
    }

    Action exploit(const std::vector<int>& h1) const {
        const int M = env_.cells, K = env_.probes;
        Action a{{}, Phase::Exploit};
        if (K == M) {
            a.probe_set.resize(static_cast<std::size_t>(M));
            std::iota(a.probe_set.begin(), a.probe_set.end(), 0);
            return a;
        }
        const auto normals = ranked_normals(h1);
        // suspects needing the most evidence first
        std::vector<int> suspects = h1;
        if (suspects.size() > 1)
            std::stable_sort(suspects.begin(), suspects.end(),
                             [&](int x, int y) { return score_of(x, 0) < score_of(y, 0); });

        bool suspects_first = true;
        if (cfg_.mode == SearchMode::CommonUnknownNull) suspects_first = abnormal_first().value_or(true);

        const auto& head = suspects_first ? suspects : normals;
        const auto& tail = suspects_first ? normals : suspects;
        for (int m : head)
            if (static_cast<int>(a.probe_set.size()) < K) a.probe_set.push_back(m);
        for (int m : tail)
            if (static_cast<int>(a.probe_set.size()) < K) a.probe_set.push_back(m);
        return a;
    }

    void refresh_pooled() {
        if (cfg_.mode == SearchMode::NoSideInfo) return;
        std::vector<const SuffStats*> stats;
        std::vector<std::optional<Param>> mles;
        stats.reserve(traces_.size());
        mles.reserve(traces_.size());
        for (const CellTrace& t : traces_) {
            stats.push_back(&t.stats());
            mles.push_back(t.mle());
        }
        ctx_.pooled_theta0 = pooled_mle(env_.family, stats, mles, Hypothesis::Normal, env_.space);
        ctx_.pooled_theta1 = pooled_mle(env_.family, stats, mles, Hypothesis::Abnormal, env_.space);
    }

    EnvConfig env_;
    SearchConfig cfg_;
    StatisticSpec spec_;
    ScoreContext ctx_;
    std::vector<CellTrace> traces_;
    long n_ = 0;
    int rr_cursor_ = 0;
    long explore2_count_ = 0;
    std::vector<int> pass_pending_;
    long explore1_ = 0;
    long explore2_ = 0;
    long floor_ = 0;
};

}  // namespace seqsearch
