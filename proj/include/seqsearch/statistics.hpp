// Per-cell log-likelihood-ratio accumulators.
//
// Four statistics reject hypothesis r ∈ {0, 1} for a cell m:
//   LGLLR  Σ ln f(y|θ̂_m(n))   - Σ ln f(y|θ̂_m^(r)(n))   local constrained MLE
//   LALLR  Σ ln f(y|θ̂_m(t-1)) - Σ ln f(y|θ̂_m^(r)(n))
//   MGLLR  Σ ln f(y|θ̂_m(n))   - Σ ln f(y|θ̂^(r)(n))     pooled across cells
//   MALLR  Σ ln f(y|θ̂_m(t-1)) - Σ ln f(y|θ̂^(r)(n))
// With a known null parameter θ⁰ the r = 0 denominator is Σ ln f(y|θ⁰).
#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "estimation.hpp"
#include "model.hpp"

namespace seqsearch {

enum class StatisticKind { LGLLR, LALLR, MGLLR, MALLR };
enum class NullMode { Unknown, KnownTheta0, PooledTheta0 };

inline bool is_adaptive(StatisticKind k) { return k == StatisticKind::LALLR || k == StatisticKind::MALLR; }
inline bool is_multi_process(StatisticKind k) { return k == StatisticKind::MGLLR || k == StatisticKind::MALLR; }

inline std::string to_string(StatisticKind k) {
    switch (k) {
        case StatisticKind::LGLLR: return "lgllr";
        case StatisticKind::LALLR: return "lallr";
        case StatisticKind::MGLLR: return "mgllr";
        case StatisticKind::MALLR: return "mallr";
    }
    return "?";
}

struct StatisticSpec {
    StatisticKind kind = StatisticKind::LALLR;
    NullMode null_mode = NullMode::Unknown;

    void validate() const {
        if (is_multi_process(kind) && null_mode == NullMode::Unknown)
            throw std::invalid_argument("multi-process statistics need a pooled or known null parameter");
    }
};

/// Denominator parameters the statistic may need besides the cell's own data.
struct ScoreContext {
    std::optional<Param> known_theta0;
    std::optional<Param> pooled_theta0;
    std::optional<Param> pooled_theta1;
};

struct MissingContext : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Observation {
    long time;
    double value;
};

class CellTrace {
public:
    CellTrace(int cell_id, const Family& f) : cell_id_(cell_id), stats_(f) {}

    /// Appends y observed at time n. The adaptive numerator gains
    /// ln f(y | θ̂_m(t-1)), the estimate from before this observation
    /// (`init_theta` for the first one).
    void ingest(double y, long n, const Param& init_theta, const Family& f, const Region& full) {
        if (!observations_.empty() && n <= observations_.back().time)
            throw std::logic_error("observation times must be strictly increasing per cell");
        if (!in_support(f, y)) throw std::domain_error("observation outside the family's support");
        const Param prev = mle_ ? *mle_ : init_theta;
        adaptive_numerator_ += detail::log_pdf_raw(f, prev, y);
        observations_.push_back({n, y});
        stats_.add(y);
        mle_ = mle_unconstrained(f, stats_, full);
    }

    [[nodiscard]] int cell_id() const { return cell_id_; }
    [[nodiscard]] std::size_t count() const { return stats_.n(); }
    [[nodiscard]] bool empty() const { return stats_.n() == 0; }
    [[nodiscard]] const SuffStats& stats() const { return stats_; }
    [[nodiscard]] const std::optional<Param>& mle() const { return mle_; }
    [[nodiscard]] double adaptive_numerator() const { return adaptive_numerator_; }
    [[nodiscard]] std::span<const Observation> observations() const { return observations_; }

private:
    int cell_id_;
    std::vector<Observation> observations_;
    SuffStats stats_;
    std::optional<Param> mle_;
    double adaptive_numerator_ = 0.0;
};

/// S_m^(r)(n) under the selected statistic.
inline double score(const CellTrace& trace, const StatisticSpec& spec, int r, const ScoreContext& ctx,
                    const Family& f, const ParameterSpace& space) {
    if (trace.empty()) throw std::invalid_argument("score of a cell without observations");
    const SuffStats& s = trace.stats();
    const double numerator =
        is_adaptive(spec.kind) ? trace.adaptive_numerator() : log_likelihood(f, s, *trace.mle());

    Param denom;
    if (r == 0 && spec.null_mode == NullMode::KnownTheta0) {
        if (!ctx.known_theta0) throw MissingContext("known null parameter not supplied");
        denom = *ctx.known_theta0;
    } else if (is_multi_process(spec.kind)) {
        const auto& pooled = r == 0 ? ctx.pooled_theta0 : ctx.pooled_theta1;
        if (!pooled) throw MissingContext(r == 0 ? "pooled normal estimate unavailable"
                                                 : "pooled abnormal estimate unavailable");
        denom = *pooled;
    } else {
        denom = mle_constrained(f, s, space, r == 0 ? Hypothesis::Normal : Hypothesis::Abnormal);
    }
    return numerator - log_likelihood(f, s, denom);
}

/// S_{m_hat}^(0)(n) + S_{m_runner_up}^(1)(n).
inline double joint_stop_statistic(std::span<const CellTrace> traces, const StatisticSpec& spec,
                                   const ScoreContext& ctx, int m_hat, int m_runner_up, const Family& f,
                                   const ParameterSpace& space) {
    if (m_hat == m_runner_up) throw std::invalid_argument("joint statistic needs two distinct cells");
    return score(traces[static_cast<std::size_t>(m_hat)], spec, 0, ctx, f, space) +
           score(traces[static_cast<std::size_t>(m_runner_up)], spec, 1, ctx, f, space);
}

}  // namespace seqsearch
