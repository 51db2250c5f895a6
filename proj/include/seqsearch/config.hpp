// Flat `section.key = value` configuration files.
#pragma once

#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "simulator.hpp"
#include "traffic.hpp"

namespace seqsearch {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrafficConfig {
    std::vector<int> cells{5, 10, 15};
    EntropyModel model;
    long packets = 0;  // 0: Gaussian entropy draws; otherwise packets per synthesized interval
    double sigma_floor = 0.05;
    std::optional<double> target_error;  // calibrate each policy's level when set
    std::vector<double> calibration_grid{1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5, 1e-6, 1e-8};
};

struct RunConfig {
    EnvConfig env = default_env();
    PolicySpec policy;
    std::vector<double> grid;
    long runs = 1000;
    std::uint64_t seed = 1;
    std::optional<int> workers;
    std::string out;
    std::string baseline = "chernoff";
    TrafficConfig traffic;

    static EnvConfig default_env() {
        EnvConfig e;
        e.cells = 5;
        e.family = Family::gaussian(1.0);
        e.true_theta0 = scalar(0.0);
        e.true_theta1 = scalar(1.0);
        e.space = ParameterSpace::split_at_midpoint(e.family, e.true_theta0, e.true_theta1);
        return e;
    }
};

// ---------------------------------------------------------------------------
// Value syntax

/// Shortest text that parses back to the same double.
inline std::string fmt_double(double v) {
    if (v == kInf) return "inf";
    if (v == -kInf) return "-inf";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(trim(cur));
    return out;
}

inline double parse_double(const std::string& text) {
    if (text == "inf" || text == "+inf") return kInf;
    if (text == "-inf") return -kInf;
    double v = 0.0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc{} || ptr != end || text.empty()) throw std::invalid_argument("not a number: '" + text + "'");
    return v;
}

template <class Int>
Int parse_int(const std::string& text) {
    Int v{};
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc{} || ptr != end || text.empty()) throw std::invalid_argument("not an integer: '" + text + "'");
    return v;
}

inline bool parse_bool(const std::string& text) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw std::invalid_argument("not a boolean: '" + text + "'");
}

inline std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    for (const auto& part : split(text, text.find(';') != std::string::npos ? ';' : ','))
        if (!part.empty()) out.push_back(parse_double(part));
    return out;
}

inline Param parse_param(const std::string& text) {
    const auto parts = split(text, ',');
    if (parts.size() == 1) return scalar(parse_double(parts[0]));
    if (parts.size() == 2) return Param{parse_double(parts[0]), parse_double(parts[1])};
    throw std::invalid_argument("expected 'value' or 'mean,sd': '" + text + "'");
}

/// `(a,b)`, `[a,b]`, `(a,b]`, `[a,b)`.
inline Interval parse_interval(const std::string& text) {
    const std::string t = trim(text);
    if (t.size() < 5 || (t.front() != '(' && t.front() != '[') || (t.back() != ')' && t.back() != ']'))
        throw std::invalid_argument("bad interval '" + t + "'");
    const auto parts = split(std::string_view(t).substr(1, t.size() - 2), ',');
    if (parts.size() != 2) throw std::invalid_argument("bad interval '" + t + "'");
    Interval i{parse_double(parts[0]), parse_double(parts[1]), t.front() == '[', t.back() == ']'};
    if (i.lo > i.hi) throw std::invalid_argument("interval bounds reversed in '" + t + "'");
    return i;
}

/// Union of intervals joined by ` u `.
inline IntervalUnion parse_union(const std::string& text) {
    IntervalUnion out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto next = text.find(" u ", pos);
        out.push_back(parse_interval(text.substr(pos, next == std::string::npos ? std::string::npos : next - pos)));
        if (next == std::string::npos) break;
        pos = next + 3;
    }
    return out;
}

/// One axis, or two axes joined by ` x `.
inline Region parse_region(const std::string& text) {
    const auto cross = text.find(" x ");
    if (cross == std::string::npos) return Region::line(parse_union(text));
    return Region::plane(parse_union(text.substr(0, cross)), parse_union(text.substr(cross + 3)));
}

inline std::string format_interval(const Interval& i) {
    return std::string(i.lo_closed ? "[" : "(") + fmt_double(i.lo) + "," + fmt_double(i.hi) + (i.hi_closed ? "]" : ")");
}

inline std::string format_union(const IntervalUnion& u) {
    std::string s;
    for (std::size_t k = 0; k < u.size(); ++k) s += (k ? " u " : "") + format_interval(u[k]);
    return s;
}

inline std::string format_region(const Region& r) {
    return r.dim == 1 ? format_union(r.axes[0]) : format_union(r.axes[0]) + " x " + format_union(r.axes[1]);
}

inline std::string format_param(const Param& p, int dim) {
    return dim == 1 ? fmt_double(p.first) : fmt_double(p.first) + "," + fmt_double(p.second);
}

template <class T>
std::string join(const std::vector<T>& xs, const char* sep = ",") {
    std::ostringstream os;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) os << sep;
        if constexpr (std::is_floating_point_v<T>) os << fmt_double(xs[i]);
        else os << xs[i];
    }
    return os.str();
}

}  // namespace detail

inline SearchMode parse_mode(const std::string& s) {
    if (s == "no-side-info") return SearchMode::NoSideInfo;
    if (s == "known-null") return SearchMode::KnownNull;
    if (s == "common-unknown-null") return SearchMode::CommonUnknownNull;
    throw std::invalid_argument("unknown mode '" + s + "'");
}

inline StatisticKind parse_statistic(const std::string& s) {
    for (auto k : {StatisticKind::LGLLR, StatisticKind::LALLR, StatisticKind::MGLLR, StatisticKind::MALLR})
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown statistic '" + s + "'");
}

inline PolicyName parse_policy_name(const std::string& s) {
    for (auto p : {PolicyName::DS, PolicyName::Chernoff, PolicyName::OpenLoopGlr})
        if (to_string(p) == s) return p;
    throw std::invalid_argument("unknown policy '" + s + "'");
}

inline FamilyKind parse_family(const std::string& s) {
    for (auto k : {FamilyKind::GaussianKnownVariance, FamilyKind::LaplaceKnownScale, FamilyKind::ExponentialRate,
                   FamilyKind::GaussianMeanVar})
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown family '" + s + "'");
}

/// `name[:statistic[:mode]]`, applied on top of `base`.
inline PolicySpec parse_policy_token(const std::string& token, PolicySpec base) {
    const auto parts = detail::split(token, ':');
    if (parts.empty() || parts.size() > 3) throw std::invalid_argument("bad policy '" + token + "'");
    base.name = parse_policy_name(parts[0]);
    if (parts.size() > 1) base.statistic = parse_statistic(parts[1]);
    if (parts.size() > 2) base.mode = parse_mode(parts[2]);
    return base;
}

// ---------------------------------------------------------------------------

inline const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{
        "env.cells", "env.probes", "env.anomalies", "env.prior", "env.family", "env.sigma", "env.scale",
        "env.theta0", "env.theta1", "space.half_width", "space.theta0", "space.theta1", "space.full", "policy",
        "policy.name", "policy.mode", "policy.statistic", "policy.criterion", "policy.level", "policy.epsilon",
        "policy.i0", "policy.i0_grid", "policy.init_estimate", "policy.max_slots", "sweep.grid", "run.runs",
        "run.seed", "run.workers", "run.out", "compare.baseline", "traffic.cells", "traffic.mu0", "traffic.sigma0",
        "traffic.mu1", "traffic.sigma1", "traffic.packets", "traffic.sigma_floor", "traffic.target_error",
        "traffic.calibration_grid"};
    return keys;
}

inline RunConfig parse_config(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        std::string key = detail::trim(t.substr(0, eq));
        const std::string value = detail::trim(t.substr(eq + 1));
        if (key == "policy.name") key = "policy";
        const auto& known = config_keys();
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown key '" + key + "' (line " + std::to_string(lineno) + ")");
        if (kv.count(key)) throw ConfigError("duplicate key '" + key + "' (line " + std::to_string(lineno) + ")");
        kv[key] = value;
    }

    RunConfig cfg;
    std::string current;
    auto has = [&](const char* k) { return kv.count(k) > 0; };
    auto get = [&](const char* k) -> const std::string& {
        current = k;
        return kv.at(k);
    };
    try {
        EnvConfig& env = cfg.env;
        if (has("env.cells")) env.cells = detail::parse_int<int>(get("env.cells"));
        if (has("env.probes")) env.probes = detail::parse_int<int>(get("env.probes"));
        if (has("env.anomalies")) env.anomalies = detail::parse_int<int>(get("env.anomalies"));
        if (has("env.prior") && get("env.prior") != "uniform") env.prior = detail::parse_list(get("env.prior"));
        if (has("env.family")) {
            env.family.kind = parse_family(get("env.family"));
            env.family.fixed_scale = 1.0;
        }
        if (has("env.sigma")) {
            current = "env.sigma";
            if (env.family.kind != FamilyKind::GaussianKnownVariance)
                throw std::invalid_argument("only applies to the gaussian family");
            env.family = Family::gaussian(detail::parse_double(get("env.sigma")));
        }
        if (has("env.scale")) {
            current = "env.scale";
            if (env.family.kind != FamilyKind::LaplaceKnownScale)
                throw std::invalid_argument("only applies to the laplace family");
            env.family = Family::laplace(detail::parse_double(get("env.scale")));
        }
        if (has("env.theta0")) env.true_theta0 = detail::parse_param(get("env.theta0"));
        if (has("env.theta1")) env.true_theta1 = detail::parse_param(get("env.theta1"));

        current = "space";
        if (has("space.theta0") != has("space.theta1"))
            throw std::invalid_argument("space.theta0 and space.theta1 must be given together");
        if (has("space.theta0")) {
            if (has("space.half_width")) throw std::invalid_argument("space.half_width conflicts with explicit regions");
            const Region r0 = detail::parse_region(get("space.theta0"));
            const Region r1 = detail::parse_region(get("space.theta1"));
            const Region full =
                has("space.full") ? detail::parse_region(get("space.full")) : ParameterSpace::natural_domain(env.family);
            current = "space";
            env.space = ParameterSpace(r0, r1, full);
        } else {
            if (has("space.full")) throw std::invalid_argument("space.full needs space.theta0 and space.theta1");
            const double w = has("space.half_width") ? detail::parse_double(get("space.half_width")) : 1e-3;
            if (!(w >= 0.0)) throw std::invalid_argument("half width must be non-negative");
            current = "space";
            env.space = ParameterSpace::split_at_midpoint(env.family, env.true_theta0, env.true_theta1, w);
        }
        current = "env";
        env.validate();

        PolicySpec& p = cfg.policy;
        if (has("policy")) p.name = parse_policy_name(get("policy"));
        if (has("policy.mode")) p.mode = parse_mode(get("policy.mode"));
        if (has("policy.statistic")) p.statistic = parse_statistic(get("policy.statistic"));
        if (has("policy.criterion")) {
            const auto& c = get("policy.criterion");
            if (c == "bayes") p.criterion.kind = Criterion::Kind::Bayes;
            else if (c == "frequentist") p.criterion.kind = Criterion::Kind::Frequentist;
            else throw std::invalid_argument("expected bayes or frequentist");
        }
        if (has("policy.level")) p.criterion.level = detail::parse_double(get("policy.level"));
        current = "policy.level";
        if (!(p.criterion.level > 0.0 && p.criterion.level < 1.0)) throw std::invalid_argument("must lie in (0,1)");
        if (has("policy.epsilon")) p.epsilon = detail::parse_double(get("policy.epsilon"));
        if (!(p.epsilon >= 0.0)) throw std::invalid_argument("must be non-negative");
        if (has("policy.i0")) {
            p.exploration_rate = detail::parse_double(get("policy.i0"));
            if (!(*p.exploration_rate > 0.0)) throw std::invalid_argument("must be positive");
        }
        if (has("policy.i0_grid"))
            for (const auto& part : detail::split(get("policy.i0_grid"), ';'))
                p.exploration_grid.push_back(detail::parse_param(part));
        if (has("policy.init_estimate")) p.init_estimate = detail::parse_param(get("policy.init_estimate"));
        if (has("policy.max_slots")) {
            p.max_slots = detail::parse_int<long>(get("policy.max_slots"));
            if (*p.max_slots < 1) throw std::invalid_argument("must be positive");
        }
        current = "policy.statistic";
        StatisticSpec{p.statistic, null_mode_for(p.mode)}.validate();

        if (has("sweep.grid")) {
            cfg.grid = detail::parse_list(get("sweep.grid"));
            for (double v : cfg.grid)
                if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument("levels must lie in (0,1)");
        }
        if (has("run.runs")) {
            cfg.runs = detail::parse_int<long>(get("run.runs"));
            if (cfg.runs < 1) throw std::invalid_argument("must be positive");
        }
        if (has("run.seed")) cfg.seed = detail::parse_int<std::uint64_t>(get("run.seed"));
        if (has("run.workers")) {
            cfg.workers = detail::parse_int<int>(get("run.workers"));
            if (*cfg.workers < 1) throw std::invalid_argument("must be positive");
        }
        if (has("run.out")) cfg.out = get("run.out");
        if (has("compare.baseline")) {
            cfg.baseline = get("compare.baseline");
            parse_policy_token(cfg.baseline, cfg.policy);
        }

        TrafficConfig& tc = cfg.traffic;
        if (has("traffic.cells")) {
            tc.cells.clear();
            for (const auto& part : detail::split(get("traffic.cells"), ',')) {
                tc.cells.push_back(detail::parse_int<int>(part));
                if (tc.cells.back() < 2) throw std::invalid_argument("need at least 2 flows");
            }
        }
        if (has("traffic.mu0")) tc.model.mu0 = detail::parse_double(get("traffic.mu0"));
        if (has("traffic.sigma0")) tc.model.sigma0 = detail::parse_double(get("traffic.sigma0"));
        if (has("traffic.mu1")) tc.model.mu1 = detail::parse_double(get("traffic.mu1"));
        if (has("traffic.sigma1")) tc.model.sigma1 = detail::parse_double(get("traffic.sigma1"));
        current = "traffic.sigma0";
        tc.model.validate();
        if (has("traffic.packets")) {
            tc.packets = detail::parse_int<long>(get("traffic.packets"));
            if (tc.packets < 0) throw std::invalid_argument("must be non-negative");
        }
        if (has("traffic.sigma_floor")) tc.sigma_floor = detail::parse_double(get("traffic.sigma_floor"));
        current = "traffic.sigma_floor";
        if (!(tc.sigma_floor > 0.0) || tc.sigma_floor >= std::min(tc.model.sigma0, tc.model.sigma1))
            throw std::invalid_argument("must be positive and below both model sigmas");
        if (has("traffic.target_error")) {
            tc.target_error = detail::parse_double(get("traffic.target_error"));
            if (!(*tc.target_error > 0.0 && *tc.target_error < 1.0)) throw std::invalid_argument("must lie in (0,1)");
        }
        if (has("traffic.calibration_grid")) {
            tc.calibration_grid = detail::parse_list(get("traffic.calibration_grid"));
            if (tc.calibration_grid.empty()) throw std::invalid_argument("empty grid");
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(current + ": " + e.what());
    }
    return cfg;
}

inline RunConfig parse_config_text(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

/// Every setting spelled out; parsing the result gives back the same config.
inline std::string print_config(const RunConfig& cfg) {
    using namespace detail;
    std::ostringstream os;
    const EnvConfig& env = cfg.env;
    const int dim = env.family.dim();
    os << "env.cells = " << env.cells << '\n';
    os << "env.probes = " << env.probes << '\n';
    os << "env.anomalies = " << env.anomalies << '\n';
    os << "env.prior = " << (env.prior.empty() ? std::string("uniform") : join(env.prior)) << '\n';
    os << "env.family = " << to_string(env.family.kind) << '\n';
    if (env.family.kind == FamilyKind::GaussianKnownVariance) os << "env.sigma = " << fmt_double(env.family.fixed_scale) << '\n';
    if (env.family.kind == FamilyKind::LaplaceKnownScale) os << "env.scale = " << fmt_double(env.family.fixed_scale) << '\n';
    os << "env.theta0 = " << format_param(env.true_theta0, dim) << '\n';
    os << "env.theta1 = " << format_param(env.true_theta1, dim) << '\n';
    os << "space.theta0 = " << format_region(env.space.theta0()) << '\n';
    os << "space.theta1 = " << format_region(env.space.theta1()) << '\n';
    os << "space.full = " << format_region(env.space.full()) << '\n';

    const PolicySpec& p = cfg.policy;
    os << "policy = " << to_string(p.name) << '\n';
    os << "policy.mode = " << to_string(p.mode) << '\n';
    os << "policy.statistic = " << to_string(p.statistic) << '\n';
    os << "policy.criterion = " << to_string(p.criterion.kind) << '\n';
    os << "policy.level = " << fmt_double(p.criterion.level) << '\n';
    os << "policy.epsilon = " << fmt_double(p.epsilon) << '\n';
    if (p.exploration_rate) os << "policy.i0 = " << fmt_double(*p.exploration_rate) << '\n';
    if (!p.exploration_grid.empty()) {
        std::vector<std::string> parts;
        for (const auto& g : p.exploration_grid) parts.push_back(format_param(g, dim));
        os << "policy.i0_grid = " << join(parts, ";") << '\n';
    }
    if (p.init_estimate) os << "policy.init_estimate = " << format_param(*p.init_estimate, dim) << '\n';
    if (p.max_slots) os << "policy.max_slots = " << *p.max_slots << '\n';
    if (!cfg.grid.empty()) os << "sweep.grid = " << join(cfg.grid) << '\n';
    os << "run.runs = " << cfg.runs << '\n';
    os << "run.seed = " << cfg.seed << '\n';
    if (cfg.workers) os << "run.workers = " << *cfg.workers << '\n';
    if (!cfg.out.empty()) os << "run.out = " << cfg.out << '\n';
    os << "compare.baseline = " << cfg.baseline << '\n';

    const TrafficConfig& tc = cfg.traffic;
    os << "traffic.cells = " << join(tc.cells) << '\n';
    os << "traffic.mu0 = " << fmt_double(tc.model.mu0) << '\n';
    os << "traffic.sigma0 = " << fmt_double(tc.model.sigma0) << '\n';
    os << "traffic.mu1 = " << fmt_double(tc.model.mu1) << '\n';
    os << "traffic.sigma1 = " << fmt_double(tc.model.sigma1) << '\n';
    os << "traffic.packets = " << tc.packets << '\n';
    os << "traffic.sigma_floor = " << fmt_double(tc.sigma_floor) << '\n';
    if (tc.target_error) os << "traffic.target_error = " << fmt_double(*tc.target_error) << '\n';
    os << "traffic.calibration_grid = " << join(tc.calibration_grid) << '\n';
    return os.str();
}

}  // namespace seqsearch
