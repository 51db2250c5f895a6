// Maximum-likelihood estimation, KL divergence and the exploration rate.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "model.hpp"

namespace seqsearch {

/// Sufficient statistics of one sample. Laplace samples also keep the sorted
/// observations with prefix sums so Σ|y - θ| is a binary search away.
class SuffStats {
public:
    explicit SuffStats(const Family& f) : keep_sorted_(f.kind == FamilyKind::LaplaceKnownScale) {}

    void add(double y) {
        ++n_;
        sum_ += y;
        sum_sq_ += y * y;
        if (!keep_sorted_) return;
        const auto pos = std::upper_bound(sorted_.begin(), sorted_.end(), y);
        const auto idx = static_cast<std::size_t>(pos - sorted_.begin());
        sorted_.insert(pos, y);
        prefix_.resize(sorted_.size() + 1);
        for (std::size_t i = idx; i < sorted_.size(); ++i) prefix_[i + 1] = prefix_[i] + sorted_[i];
    }

    void merge(const SuffStats& other) {
        if (keep_sorted_ != other.keep_sorted_) throw std::invalid_argument("merging stats of different families");
        n_ += other.n_;
        sum_ += other.sum_;
        sum_sq_ += other.sum_sq_;
        if (!keep_sorted_) return;
        std::vector<double> merged(sorted_.size() + other.sorted_.size());
        std::merge(sorted_.begin(), sorted_.end(), other.sorted_.begin(), other.sorted_.end(), merged.begin());
        sorted_ = std::move(merged);
        prefix_.assign(sorted_.size() + 1, 0.0);
        std::partial_sum(sorted_.begin(), sorted_.end(), prefix_.begin() + 1);
    }

    [[nodiscard]] std::size_t n() const { return n_; }
    [[nodiscard]] double sum() const { return sum_; }
    [[nodiscard]] double sum_sq() const { return sum_sq_; }
    [[nodiscard]] bool keeps_sorted() const { return keep_sorted_; }
    [[nodiscard]] std::span<const double> sorted() const { return sorted_; }

    /// Σ (y - mu)² over the sample.
    [[nodiscard]] double sum_sq_dev(double mu) const {
        return std::max(0.0, sum_sq_ - 2.0 * mu * sum_ + static_cast<double>(n_) * mu * mu);
    }

    /// Σ |y - theta|; Laplace only.
    [[nodiscard]] double sum_abs_dev(double theta) const {
        const auto k = static_cast<std::size_t>(std::upper_bound(sorted_.begin(), sorted_.end(), theta) -
                                                sorted_.begin());
        const double below = prefix_.empty() ? 0.0 : prefix_[k];
        const double total = prefix_.empty() ? 0.0 : prefix_.back();
        const double nk = static_cast<double>(k);
        const double rest = static_cast<double>(sorted_.size() - k);
        return (theta * nk - below) + (total - below - theta * rest);
    }

private:
    std::size_t n_ = 0;
    double sum_ = 0.0;
    double sum_sq_ = 0.0;
    bool keep_sorted_ = false;
    std::vector<double> sorted_;
    std::vector<double> prefix_{0.0};
};

/// Σ ln f(y | theta) over the sample summarised by `s`.
inline double log_likelihood(const Family& f, const SuffStats& s, const Param& theta) {
    const double n = static_cast<double>(s.n());
    switch (f.kind) {
        case FamilyKind::GaussianKnownVariance: {
            const double var = f.fixed_scale * f.fixed_scale;
            return -n * (detail::kHalfLog2Pi + std::log(f.fixed_scale)) - s.sum_sq_dev(theta.first) / (2.0 * var);
        }
        case FamilyKind::LaplaceKnownScale:
            return -n * std::log(2.0 * f.fixed_scale) - s.sum_abs_dev(theta.first) / f.fixed_scale;
        case FamilyKind::ExponentialRate:
            return n * std::log(theta.first) - theta.first * s.sum();
        case FamilyKind::GaussianMeanVar: {
            const double var = theta.second * theta.second;
            return -n * (detail::kHalfLog2Pi + std::log(theta.second)) - s.sum_sq_dev(theta.first) / (2.0 * var);
        }
    }
    return 0.0;
}

namespace detail {

inline Param clamp_to(const Region& r, Param p) {
    auto clamp_axis = [](const IntervalUnion& u, double x) {
        double best = x, dist = kInf;
        for (const Interval& i : u) {
            if (i.empty()) continue;
            const double y = i.project(x);
            if (std::abs(y - x) < dist) {
                dist = std::abs(y - x);
                best = y;
            }
        }
        return best;
    };
    p.first = clamp_axis(r.axes[0], p.first);
    if (r.dim == 2) p.second = clamp_axis(r.axes[1], p.second);
    return p;
}

inline Param raw_mle(const Family& f, const SuffStats& s) {
    const double n = static_cast<double>(s.n());
    switch (f.kind) {
        case FamilyKind::GaussianKnownVariance: return scalar(s.sum() / n);
        case FamilyKind::LaplaceKnownScale: return scalar(s.sorted()[(s.n() - 1) / 2]);  // lower median
        case FamilyKind::ExponentialRate: return scalar(s.sum() > 0.0 ? n / s.sum() : kInf);
        case FamilyKind::GaussianMeanVar: {
            const double mu = s.sum() / n;
            return Param{mu, std::sqrt(s.sum_sq_dev(mu) / n)};
        }
    }
    return {};
}

}  // namespace detail

/// Unconstrained MLE over Θ, clamped into the closure of `full`.
inline Param mle_unconstrained(const Family& f, const SuffStats& s, const Region& full) {
    if (s.n() == 0) throw std::invalid_argument("MLE needs at least one observation");
    return detail::clamp_to(full, detail::raw_mle(f, s));
}

inline Param mle_unconstrained(const Family& f, const SuffStats& s) {
    return mle_unconstrained(f, s, ParameterSpace::natural_domain(f));
}

/// MLE restricted to the closure of a union of product regions. For the
/// supported families the log-likelihood is unimodal in each coordinate, so
/// the maximiser over a box is the coordinate-wise projection of the mode;
/// candidates from every box are compared by likelihood.
inline Param mle_constrained(const Family& f, const SuffStats& s, std::span<const Region> regions) {
    if (s.n() == 0) throw std::invalid_argument("MLE needs at least one observation");
    const Param mode = detail::raw_mle(f, s);
    const double n = static_cast<double>(s.n());
    std::optional<Param> best;
    double best_ll = -kInf;
    auto consider = [&](const Param& p) {
        const double ll = log_likelihood(f, s, p);
        if (!best || ll > best_ll) {
            best = p;
            best_ll = ll;
        }
    };
    for (const Region& r : regions) {
        for (const Interval& a : r.axes[0]) {
            if (a.empty()) continue;
            if (r.dim == 1) {
                consider(scalar(a.project(mode.first)));
                continue;
            }
            for (const Interval& b : r.axes[1]) {
                if (b.empty()) continue;
                const double mu = a.project(mode.first);
                const double sd = b.project(std::sqrt(s.sum_sq_dev(mu) / n));
                if (sd > 0.0) consider(Param{mu, sd});
            }
        }
    }
    if (!best) throw std::invalid_argument("constrained MLE over an empty region");
    return *best;
}

inline Param mle_constrained(const Family& f, const SuffStats& s, const Region& region) {
    return mle_constrained(f, s, std::span<const Region>(&region, 1));
}

enum class Hypothesis { Normal, Abnormal };

/// MLE restricted to Θ⁰ (Normal) or Θ \ Θ⁰ (Abnormal).
inline Param mle_constrained(const Family& f, const SuffStats& s, const ParameterSpace& space, Hypothesis side) {
    return side == Hypothesis::Normal ? mle_constrained(f, s, space.theta0())
                                      : mle_constrained(f, s, std::span<const Region>(space.not_theta0()));
}

/// D(f(.|a) || f(.|b)).
inline double kl_divergence(const Family& f, const Param& a, const Param& b) {
    switch (f.kind) {
        case FamilyKind::GaussianKnownVariance: {
            const double d = (a.first - b.first) / f.fixed_scale;
            return 0.5 * d * d;
        }
        case FamilyKind::LaplaceKnownScale: {
            const double d = std::abs(a.first - b.first) / f.fixed_scale;
            return d + std::exp(-d) - 1.0;
        }
        case FamilyKind::ExponentialRate: {
            const double r = b.first / a.first;
            return std::max(0.0, -std::log(r) + r - 1.0);
        }
        case FamilyKind::GaussianMeanVar: {
            const double va = a.second * a.second, vb = b.second * b.second;
            const double dm = a.first - b.first;
            return std::max(0.0, std::log(b.second / a.second) + (va + dm * dm) / (2.0 * vb) - 0.5);
        }
    }
    return 0.0;
}

namespace detail {

/// Minimum of a unimodal function on [a, b].
inline double golden_min(const std::function<double(double)>& fn, double a, double b, double tol = 1e-11) {
    constexpr double invphi = 0.6180339887498949;
    double c = b - invphi * (b - a), d = a + invphi * (b - a);
    double fc = fn(c), fd = fn(d);
    for (int it = 0; it < 300 && (b - a) > tol * (1.0 + std::abs(a) + std::abs(b)); ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = fn(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = fn(d);
        }
    }
    return 0.5 * (a + b);
}

// Finite bracket inside an interval's closure around a reference point.
inline std::pair<double, double> bracket(const Interval& i, double centre, double span) {
    double lo = std::isfinite(i.lo) ? i.lo : std::min(centre, i.hi) - span;
    double hi = std::isfinite(i.hi) ? i.hi : std::max(centre, i.lo) + span;
    return {lo, hi};
}

}  // namespace detail

/// min over φ in the closure of `theta0_region` of D(theta1 || φ): golden
/// section within each interval (box), then the minimum across them.
inline double d_min(const Family& f, const Param& theta1, const Region& theta0_region) {
    double best = kInf;
    const double span = 1e3 * (1.0 + std::abs(theta1.first) + std::abs(theta1.second));
    for (const Interval& a : theta0_region.axes[0]) {
        if (a.empty()) continue;
        if (theta0_region.dim == 1) {
            auto fn = [&](double x) { return kl_divergence(f, theta1, scalar(x)); };
            const auto [lo, hi] = detail::bracket(a, theta1.first, span);
            if (f.kind == FamilyKind::ExponentialRate && lo <= 0.0) {
                // rate must stay positive; KL blows up toward zero anyway
                const double x = detail::golden_min(fn, std::max(lo, 1e-300) + 1e-12, hi);
                best = std::min({best, fn(x), fn(hi)});
                continue;
            }
            const double x = lo == hi ? lo : detail::golden_min(fn, lo, hi);
            best = std::min({best, fn(x), fn(lo), fn(hi)});
            continue;
        }
        for (const Interval& b : theta0_region.axes[1]) {
            if (b.empty()) continue;
            // the mean enters as a quadratic, so its minimiser is a projection
            const double mu = a.project(theta1.first);
            auto fn = [&](double sd) { return kl_divergence(f, theta1, Param{mu, sd}); };
            auto [lo, hi] = detail::bracket(b, theta1.second, span);
            lo = std::max(lo, 1e-12);
            const double x = lo == hi ? lo : detail::golden_min(fn, lo, hi);
            best = std::min({best, fn(x), fn(lo), fn(hi)});
        }
    }
    return best;
}

namespace detail {

inline double simpson(const std::function<double(double)>& g, double a, double fa, double b, double fb,
                      double m, double fm, double whole, double eps, int depth) {
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = g(lm), frm = g(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * eps) return left + right + delta / 15.0;
    return simpson(g, a, fa, m, fm, lm, flm, left, 0.5 * eps, depth - 1) +
           simpson(g, m, fm, b, fb, rm, frm, right, 0.5 * eps, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson quadrature on [a, b]; `eps` is relative to the size of
/// a coarse first estimate (absolute when that estimate is below one).
inline double integrate(const std::function<double(double)>& g, double a, double b, double eps = 1e-12,
                        int max_depth = 30) {
    if (!(b > a)) return 0.0;
    const double m = 0.5 * (a + b);
    const double fa = g(a), fb = g(b), fm = g(m);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    double scale = 1.0;
    for (int i = 1; i < 16; ++i) scale = std::max(scale, std::abs(g(a + (b - a) * i / 16.0)) * (b - a));
    return detail::simpson(g, a, fa, b, fb, m, fm, whole, eps * scale, max_depth);
}

/// Integration breakpoints covering the bulk (all but ~1e-10 of the mass)
/// of f(.|a) and f(.|b), including kinks of the Laplace density.
inline std::vector<double> support_breakpoints(const Family& f, const Param& a, const Param& b) {
    std::vector<double> pts;
    switch (f.kind) {
        case FamilyKind::GaussianKnownVariance:
        case FamilyKind::GaussianMeanVar: {
            const double sa = f.kind == FamilyKind::GaussianMeanVar ? a.second : f.fixed_scale;
            const double sb = f.kind == FamilyKind::GaussianMeanVar ? b.second : f.fixed_scale;
            const double w = 9.0;
            pts = {std::min(a.first - w * sa, b.first - w * sb), a.first, b.first,
                   std::max(a.first + w * sa, b.first + w * sb)};
            break;
        }
        case FamilyKind::LaplaceKnownScale: {
            const double w = 25.0 * f.fixed_scale;
            pts = {std::min(a.first, b.first) - w, a.first, b.first, std::max(a.first, b.first) + w};
            break;
        }
        case FamilyKind::ExponentialRate:
            pts = {0.0, 25.0 / std::max(a.first, b.first), 25.0 / std::min(a.first, b.first)};
            break;
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    return pts;
}

/// E_{f(.|theta0)}[exp(-s ℓ)], ℓ = ln f(y|theta0)/f(y|theta), by quadrature.
inline double tilted_mgf_numeric(const Family& f, const Param& theta0, const Param& theta, double s) {
    auto g = [&](double y) {
        const double l0 = detail::log_pdf_raw(f, theta0, y);
        const double l1 = detail::log_pdf_raw(f, theta, y);
        return std::exp((1.0 - s) * l0 + s * l1);
    };
    auto pts = support_breakpoints(f, theta0, theta);
    // outside s in [0, 1] the tilted density can sit well away from both
    // references, so cover it explicitly
    if (f.kind == FamilyKind::GaussianKnownVariance || f.kind == FamilyKind::GaussianMeanVar) {
        const double s0 = f.kind == FamilyKind::GaussianMeanVar ? theta0.second : f.fixed_scale;
        const double s1 = f.kind == FamilyKind::GaussianMeanVar ? theta.second : f.fixed_scale;
        const double a = (1.0 - s) / (s0 * s0), b = s / (s1 * s1);
        if (!(a + b > 0.0)) return kInf;
        const double centre = (a * theta0.first + b * theta.first) / (a + b);
        const double w = 12.0 / std::sqrt(a + b);
        pts.insert(pts.end(), {centre - w, centre, centre + w});
    } else if (f.kind == FamilyKind::ExponentialRate) {
        const double rate = (1.0 - s) * theta0.first + s * theta.first;
        if (!(rate > 0.0)) return kInf;
        pts.push_back(40.0 / rate);
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) total += integrate(g, pts[i], pts[i + 1], 1e-13);
    return total;
}

/// Closed form of the same expectation where one exists.
inline std::optional<double> tilted_mgf_closed(const Family& f, const Param& theta0, const Param& theta, double s) {
    if (f.kind == FamilyKind::GaussianKnownVariance) {
        const double d = (theta.first - theta0.first) / f.fixed_scale;
        return std::exp(-0.5 * s * (1.0 - s) * d * d);
    }
    if (f.kind == FamilyKind::ExponentialRate) {
        const double rate = (1.0 - s) * theta0.first + s * theta.first;
        if (!(rate > 0.0)) return kInf;
        return std::pow(theta0.first, 1.0 - s) * std::pow(theta.first, s) / rate;
    }
    if (f.kind == FamilyKind::GaussianMeanVar) {
        const double a = (1.0 - s) / (theta0.second * theta0.second);
        const double b = s / (theta.second * theta.second);
        const double precision = a + b;
        if (!(precision > 0.0)) return kInf;
        const double d = theta.first - theta0.first;
        return std::pow(theta0.second, s - 1.0) * std::pow(theta.second, -s) / std::sqrt(precision) *
               std::exp(-0.5 * a * b / precision * d * d);
    }
    return std::nullopt;
}

/// inf over the grid of sup_{s in (0, 10]} -ln E_{theta0}[exp(-s ℓ)].
inline double exploration_rate_I0(const Family& f, const Param& theta0, std::span<const Param> grid,
                                  bool force_numeric = false) {
    if (grid.empty()) throw std::invalid_argument("exploration rate needs a nonempty parameter grid");
    double rate = kInf;
    for (const Param& theta : grid) {
        if (theta == theta0) throw std::domain_error("exploration grid contains the null parameter");
        auto neg_rate = [&](double s) {
            std::optional<double> m = force_numeric ? std::nullopt : tilted_mgf_closed(f, theta0, theta, s);
            const double e = m ? *m : tilted_mgf_numeric(f, theta0, theta, s);
            return e > 0.0 && std::isfinite(e) ? std::log(e) : kInf;
        };
        // the log-MGF is convex, so its finite domain is an interval
        double hi = 10.0;
        if (!std::isfinite(neg_rate(hi))) {
            double ok = 1e-4;
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (ok + hi);
                (std::isfinite(neg_rate(mid)) ? ok : hi) = mid;
            }
            hi = ok;
        }
        const double s = detail::golden_min(neg_rate, 1e-4, hi, 1e-7);
        rate = std::min(rate, -std::min(neg_rate(s), neg_rate(1e-4)));
    }
    if (!(rate > 0.0)) throw std::domain_error("exploration rate is not positive");
    return rate;
}

namespace detail {

/// k-th smallest (0-based) element of the union of sorted arrays.
inline double kth_smallest(std::span<const std::span<const double>> arrays, std::size_t k) {
    std::vector<std::size_t> lo(arrays.size(), 0), hi(arrays.size());
    for (std::size_t i = 0; i < arrays.size(); ++i) hi[i] = arrays[i].size();
    while (true) {
        std::size_t remaining = 0, widest = 0;
        for (std::size_t i = 0; i < arrays.size(); ++i) {
            remaining += hi[i] - lo[i];
            if (hi[i] - lo[i] > hi[widest] - lo[widest]) widest = i;
        }
        if (k >= remaining) throw std::out_of_range("order statistic out of range");
        if (remaining <= 64) {
            std::vector<double> rest;
            for (std::size_t i = 0; i < arrays.size(); ++i)
                rest.insert(rest.end(), arrays[i].begin() + lo[i], arrays[i].begin() + hi[i]);
            std::nth_element(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(k), rest.end());
            return rest[k];
        }
        const double pivot = arrays[widest][(lo[widest] + hi[widest]) / 2];
        std::vector<std::size_t> lt(arrays.size()), le(arrays.size());
        std::size_t n_lt = 0, n_le = 0;
        for (std::size_t i = 0; i < arrays.size(); ++i) {
            const auto b = arrays[i].begin();
            lt[i] = static_cast<std::size_t>(std::lower_bound(b + lo[i], b + hi[i], pivot) - b);
            le[i] = static_cast<std::size_t>(std::upper_bound(b + lo[i], b + hi[i], pivot) - b);
            n_lt += lt[i] - lo[i];
            n_le += le[i] - lo[i];
        }
        if (k < n_lt) {
            hi = lt;
        } else if (k < n_le) {
            return pivot;
        } else {
            k -= n_le;
            lo = le;
        }
    }
}

}  // namespace detail

/// MLE over Θ of the pooled sample of several cells.
inline Param mle_of_union(const Family& f, std::span<const SuffStats* const> parts, const Region& full) {
    if (f.kind != FamilyKind::LaplaceKnownScale) {
        SuffStats merged(f);
        for (const SuffStats* s : parts) merged.merge(*s);
        return mle_unconstrained(f, merged, full);
    }
    std::vector<std::span<const double>> arrays;
    std::size_t total = 0;
    for (const SuffStats* s : parts) {
        arrays.push_back(s->sorted());
        total += s->n();
    }
    if (total == 0) throw std::invalid_argument("MLE needs at least one observation");
    return detail::clamp_to(full, scalar(detail::kth_smallest(arrays, (total - 1) / 2)));
}

/// Global MLE over the cells whose current estimate lies on `side`
/// (Normal: inside Θ⁰, Abnormal: outside Θ⁰). Cells without an estimate are
/// skipped; returns nullopt when no cell qualifies.
inline std::optional<Param> pooled_mle(const Family& f, std::span<const SuffStats* const> stats,
                                       std::span<const std::optional<Param>> current_mles, Hypothesis side,
                                       const ParameterSpace& space) {
    std::vector<const SuffStats*> chosen;
    for (std::size_t m = 0; m < stats.size(); ++m) {
        if (!current_mles[m] || stats[m]->n() == 0) continue;
        const bool normal = space.theta0().contains(*current_mles[m]);
        if (normal == (side == Hypothesis::Normal)) chosen.push_back(stats[m]);
    }
    if (chosen.empty()) return std::nullopt;
    return mle_of_union(f, chosen, space.full());
}

}  // namespace seqsearch
