// Observation families and the normal / abnormal / indifference partition of
// the parameter space.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqsearch {

using Rng = std::mt19937_64;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// A point in parameter space. One-parameter families use `first` only;
/// the two-parameter Gaussian stores (mean, standard deviation).
struct Param {
    double first = 0.0;
    double second = 0.0;

    friend bool operator==(const Param&, const Param&) = default;
};

inline Param scalar(double v) { return Param{v, 0.0}; }

enum class FamilyKind { GaussianKnownVariance, LaplaceKnownScale, ExponentialRate, GaussianMeanVar };

/// Parametric observation model. `fixed_scale` is the known standard
/// deviation (GaussianKnownVariance) or the known scale b (LaplaceKnownScale).
struct Family {
    FamilyKind kind = FamilyKind::GaussianKnownVariance;
    double fixed_scale = 1.0;

    static Family gaussian(double sigma = 1.0) { return checked({FamilyKind::GaussianKnownVariance, sigma}); }
    static Family laplace(double b = 1.0) { return checked({FamilyKind::LaplaceKnownScale, b}); }
    static Family exponential() { return {FamilyKind::ExponentialRate, 1.0}; }
    static Family gaussian_mean_var() { return {FamilyKind::GaussianMeanVar, 1.0}; }

    [[nodiscard]] int dim() const { return kind == FamilyKind::GaussianMeanVar ? 2 : 1; }

    friend bool operator==(const Family&, const Family&) = default;

private:
    static Family checked(Family f) {
        if (!(f.fixed_scale > 0.0) || !std::isfinite(f.fixed_scale))
            throw std::invalid_argument("family scale must be positive and finite");
        return f;
    }
};

inline std::string to_string(FamilyKind k) {
    switch (k) {
        case FamilyKind::GaussianKnownVariance: return "gaussian";
        case FamilyKind::LaplaceKnownScale: return "laplace";
        case FamilyKind::ExponentialRate: return "exponential";
        case FamilyKind::GaussianMeanVar: return "gaussian-mv";
    }
    return "?";
}

inline bool in_support(const Family& f, double y) {
    if (!std::isfinite(y)) return false;
    return f.kind != FamilyKind::ExponentialRate || y >= 0.0;
}

inline void check_param(const Family& f, const Param& theta) {
    switch (f.kind) {
        case FamilyKind::GaussianKnownVariance:
        case FamilyKind::LaplaceKnownScale:
            if (!std::isfinite(theta.first)) throw std::domain_error("location parameter must be finite");
            break;
        case FamilyKind::ExponentialRate:
            if (!(theta.first > 0.0) || !std::isfinite(theta.first))
                throw std::domain_error("exponential rate must be positive");
            break;
        case FamilyKind::GaussianMeanVar:
            if (!std::isfinite(theta.first) || !(theta.second > 0.0) || !std::isfinite(theta.second))
                throw std::domain_error("gaussian (mean, sd) requires finite mean and positive sd");
            break;
    }
}

namespace detail {
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)

// Unchecked log-density; callers guarantee theta and y are valid.
inline double log_pdf_raw(const Family& f, const Param& theta, double y) {
    switch (f.kind) {
        case FamilyKind::GaussianKnownVariance: {
            const double z = (y - theta.first) / f.fixed_scale;
            return -kHalfLog2Pi - std::log(f.fixed_scale) - 0.5 * z * z;
        }
        case FamilyKind::LaplaceKnownScale:
            return -std::log(2.0 * f.fixed_scale) - std::abs(y - theta.first) / f.fixed_scale;
        case FamilyKind::ExponentialRate:
            return std::log(theta.first) - theta.first * y;
        case FamilyKind::GaussianMeanVar: {
            const double z = (y - theta.first) / theta.second;
            return -kHalfLog2Pi - std::log(theta.second) - 0.5 * z * z;
        }
    }
    return 0.0;
}
}  // namespace detail

/// ln f(y | theta). Throws std::domain_error for an invalid parameter or an
/// observation outside the family's support.
inline double log_pdf(const Family& f, const Param& theta, double y) {
    check_param(f, theta);
    if (!in_support(f, y)) throw std::domain_error("observation outside the family's support");
    return detail::log_pdf_raw(f, theta, y);
}

/// Draws i.i.d. observations from one family. Owns a cached standard-normal
/// generator, so one Sampler should serve one episode.
class Sampler {
public:
    explicit Sampler(Family f) : family_(f) {}

    double operator()(const Param& theta, Rng& rng) {
        switch (family_.kind) {
            case FamilyKind::GaussianKnownVariance:
                return theta.first + family_.fixed_scale * normal_(rng);
            case FamilyKind::GaussianMeanVar:
                return theta.first + theta.second * normal_(rng);
            case FamilyKind::LaplaceKnownScale: {
                // difference of two unit exponentials is standard Laplace
                const double e = exponential_(rng) - exponential_(rng);
                return theta.first + family_.fixed_scale * e;
            }
            case FamilyKind::ExponentialRate:
                return exponential_(rng) / theta.first;
        }
        return 0.0;
    }

    [[nodiscard]] const Family& family() const { return family_; }

private:
    Family family_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::exponential_distribution<double> exponential_{1.0};
};

/// One draw from f(. | theta).
inline double sample(const Family& f, const Param& theta, Rng& rng) {
    check_param(f, theta);
    Sampler s(f);
    return s(theta, rng);
}

// ---------------------------------------------------------------------------
// Parameter regions

struct Interval {
    double lo = -kInf;
    double hi = kInf;
    bool lo_closed = false;
    bool hi_closed = false;

    static Interval open(double lo, double hi) { return {lo, hi, false, false}; }
    static Interval closed(double lo, double hi) { return {lo, hi, true, true}; }
    static Interval point(double v) { return {v, v, true, true}; }

    [[nodiscard]] bool contains(double x) const {
        const bool above = lo_closed ? x >= lo : x > lo;
        const bool below = hi_closed ? x <= hi : x < hi;
        return above && below;
    }
    [[nodiscard]] bool empty() const {
        return lo > hi || (lo == hi && !(lo_closed && hi_closed));
    }
    /// Nearest point of the closure.
    [[nodiscard]] double project(double x) const { return std::clamp(x, lo, hi); }

    friend bool operator==(const Interval&, const Interval&) = default;
};

using IntervalUnion = std::vector<Interval>;

inline bool contains(const IntervalUnion& u, double x) {
    return std::any_of(u.begin(), u.end(), [x](const Interval& i) { return i.contains(x); });
}

/// Complement of `u` relative to `within` (both unions of intervals on the line).
inline IntervalUnion complement(const IntervalUnion& u, const IntervalUnion& within) {
    IntervalUnion out;
    for (const Interval& piece : within) {
        IntervalUnion parts{piece};
        for (const Interval& cut : u) {
            if (cut.empty()) continue;
            IntervalUnion next;
            for (const Interval& q : parts) {
                Interval left = q;  // q ∩ (-inf, cut.lo)
                if (cut.lo < q.hi) {
                    left.hi = cut.lo;
                    left.hi_closed = !cut.lo_closed;
                } else if (cut.lo == q.hi) {
                    left.hi_closed = q.hi_closed && !cut.lo_closed;
                }
                Interval right = q;  // q ∩ (cut.hi, inf)
                if (cut.hi > q.lo) {
                    right.lo = cut.hi;
                    right.lo_closed = !cut.hi_closed;
                } else if (cut.hi == q.lo) {
                    right.lo_closed = q.lo_closed && !cut.hi_closed;
                }
                if (!left.empty()) next.push_back(left);
                if (!right.empty()) next.push_back(right);
            }
            parts = std::move(next);
        }
        out.insert(out.end(), parts.begin(), parts.end());
    }
    std::sort(out.begin(), out.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    return out;
}

inline bool disjoint(const IntervalUnion& a, const IntervalUnion& b) {
    for (const Interval& x : a)
        for (const Interval& y : b) {
            const double lo = std::max(x.lo, y.lo);
            const double hi = std::min(x.hi, y.hi);
            if (lo < hi) return false;
            if (lo == hi && x.contains(lo) && y.contains(lo)) return false;
        }
    return true;
}

/// Cartesian product over coordinates of interval unions.
struct Region {
    int dim = 1;
    std::array<IntervalUnion, 2> axes;

    static Region line(IntervalUnion u) { return Region{1, {std::move(u), {}}}; }
    static Region plane(IntervalUnion first, IntervalUnion second) {
        return Region{2, {std::move(first), std::move(second)}};
    }

    [[nodiscard]] bool contains(const Param& p) const {
        if (!seqsearch::contains(axes[0], p.first)) return false;
        return dim == 1 || seqsearch::contains(axes[1], p.second);
    }
    [[nodiscard]] bool empty() const {
        for (int a = 0; a < dim; ++a)
            if (std::all_of(axes[a].begin(), axes[a].end(), [](const Interval& i) { return i.empty(); }))
                return true;
        return false;
    }

    friend bool operator==(const Region&, const Region&) = default;
};

inline bool disjoint(const Region& a, const Region& b) {
    for (int d = 0; d < a.dim; ++d)
        if (disjoint(a.axes[d], b.axes[d])) return true;
    return false;
}

enum class RegionKind { Theta0, Theta1, Indiff };

/// Θ = Θ⁰ ∪ Θ¹ ∪ I with I the indifference region. Also caches Θ \ Θ⁰ as a
/// union of product regions, which constrained estimation needs.
class ParameterSpace {
public:
    ParameterSpace(Region theta0, Region theta1, Region full)
        : theta0_(std::move(theta0)), theta1_(std::move(theta1)), full_(std::move(full)) {
        if (theta0_.dim != theta1_.dim || theta0_.dim != full_.dim)
            throw std::invalid_argument("parameter regions have mismatched dimension");
        if (theta0_.empty()) throw std::invalid_argument("normal region is empty");
        if (theta1_.empty()) throw std::invalid_argument("abnormal region is empty");
        if (!disjoint(theta0_, theta1_)) throw std::invalid_argument("normal and abnormal regions overlap");
        if (full_.dim == 1) {
            not_theta0_.push_back(Region::line(complement(theta0_.axes[0], full_.axes[0])));
        } else {
            if (theta0_.axes[0].size() != 1 || theta0_.axes[1].size() != 1)
                throw std::invalid_argument("two-parameter normal region must be a single box");
            not_theta0_.push_back(Region::plane(complement(theta0_.axes[0], full_.axes[0]), full_.axes[1]));
            not_theta0_.push_back(Region::plane(full_.axes[0], complement(theta0_.axes[1], full_.axes[1])));
        }
        std::erase_if(not_theta0_, [](const Region& r) { return r.empty(); });
    }

    /// Θ⁰ and Θ¹ separated by the closed gap [mid - w, mid + w] on the first
    /// coordinate, where mid is halfway between the two reference parameters.
    /// Other coordinates span the family's natural domain.
    static ParameterSpace split_at_midpoint(const Family& f, const Param& normal, const Param& abnormal,
                                            double half_width = 1e-3) {
        const Region full = natural_domain(f);
        const double mid = 0.5 * (normal.first + abnormal.first);
        const IntervalUnion& axis = full.axes[0];
        const double lo = axis.front().lo;
        const double hi = axis.back().hi;
        IntervalUnion below{Interval{lo, mid - half_width, axis.front().lo_closed, false}};
        IntervalUnion above{Interval{mid + half_width, hi, false, axis.back().hi_closed}};
        const bool normal_below = normal.first < abnormal.first;
        Region r0 = full, r1 = full;
        r0.axes[0] = normal_below ? below : above;
        r1.axes[0] = normal_below ? above : below;
        return ParameterSpace(r0, r1, full);
    }

    static Region natural_domain(const Family& f) {
        switch (f.kind) {
            case FamilyKind::ExponentialRate: return Region::line({Interval::open(0.0, kInf)});
            case FamilyKind::GaussianMeanVar:
                return Region::plane({Interval::open(-kInf, kInf)}, {Interval{1e-3, kInf, true, false}});
            default: return Region::line({Interval::open(-kInf, kInf)});
        }
    }

    [[nodiscard]] const Region& theta0() const { return theta0_; }
    [[nodiscard]] const Region& theta1() const { return theta1_; }
    [[nodiscard]] const Region& full() const { return full_; }
    [[nodiscard]] const std::vector<Region>& not_theta0() const { return not_theta0_; }
    [[nodiscard]] int dim() const { return full_.dim; }

    [[nodiscard]] RegionKind classify(const Param& p) const {
        if (theta0_.contains(p)) return RegionKind::Theta0;
        if (theta1_.contains(p)) return RegionKind::Theta1;
        return RegionKind::Indiff;
    }

    /// Midpoint of the indifference gap on each coordinate where Θ⁰ and Θ¹
    /// are separated; `fallback` supplies coordinates with no gap.
    [[nodiscard]] Param indifference_midpoint(const Param& fallback) const {
        Param out = fallback;
        for (int d = 0; d < full_.dim; ++d) {
            const IntervalUnion& a = theta0_.axes[d];
            const IntervalUnion& b = theta1_.axes[d];
            if (a == b || a.empty() || b.empty()) continue;
            const double a_hi = a.back().hi, b_lo = b.front().lo;
            const double b_hi = b.back().hi, a_lo = a.front().lo;
            double mid;
            if (a_hi <= b_lo) mid = 0.5 * (a_hi + b_lo);
            else if (b_hi <= a_lo) mid = 0.5 * (b_hi + a_lo);
            else continue;
            if (!std::isfinite(mid)) continue;
            (d == 0 ? out.first : out.second) = mid;
        }
        return out;
    }

private:
    Region theta0_;
    Region theta1_;
    Region full_;
    std::vector<Region> not_theta0_;
};

inline bool region_contains(const ParameterSpace& space, RegionKind kind, const Param& theta) {
    return space.classify(theta) == kind;
}

/// Experiment environment: M cells, K probes per slot, L anomalies.
struct EnvConfig {
    int cells = 2;
    int probes = 1;
    int anomalies = 1;
    std::vector<double> prior;  // empty means uniform
    Family family;
    Param true_theta0;
    Param true_theta1;
    ParameterSpace space = ParameterSpace::split_at_midpoint(Family{}, scalar(0.0), scalar(1.0));

    [[nodiscard]] std::vector<double> resolved_prior() const {
        if (!prior.empty()) return prior;
        return std::vector<double>(static_cast<std::size_t>(cells), 1.0 / cells);
    }

    void validate() const {
        if (cells < 2) throw std::invalid_argument("env.cells: need at least 2 cells");
        if (probes < 1 || probes > cells) throw std::invalid_argument("env.probes: need 1 <= K <= M");
        if (anomalies < 1 || anomalies >= cells) throw std::invalid_argument("env.anomalies: need 1 <= L < M");
        if (!prior.empty()) {
            if (prior.size() != static_cast<std::size_t>(cells))
                throw std::invalid_argument("env.prior: length must equal the cell count");
            double total = 0.0;
            for (double p : prior) {
                if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("env.prior: entries must lie in (0,1)");
                total += p;
            }
            if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("env.prior: must sum to 1");
        }
        if (space.dim() != family.dim()) throw std::invalid_argument("space: dimension does not match family");
        check_param(family, true_theta0);
        check_param(family, true_theta1);
        if (!space.theta0().contains(true_theta0))
            throw std::invalid_argument("env.theta0: true normal parameter lies outside the normal region");
        if (!space.theta1().contains(true_theta1))
            throw std::invalid_argument("env.theta1: true abnormal parameter lies outside the abnormal region");
    }
};

}  // namespace seqsearch
