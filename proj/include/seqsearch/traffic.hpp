// Packet-size sample entropy and a synthetic flow generator.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "model.hpp"
#include "simulator.hpp"

namespace seqsearch {

struct FlowInterval {
    long flow_id = 0;
    long interval = 0;
    std::map<long, long> histogram;  // packet size -> count
};

/// Shannon entropy (natural log) of the packet-size proportions.
inline double interval_entropy(const FlowInterval& iv) {
    double total = 0.0;
    for (const auto& [size, count] : iv.histogram) {
        if (count < 0) throw std::domain_error("negative packet count");
        total += static_cast<double>(count);
    }
    if (total < 1.0) throw std::domain_error("interval holds no packets");
    double h = 0.0;
    for (const auto& [size, count] : iv.histogram) {
        if (count == 0) continue;
        const double q = static_cast<double>(count) / total;
        h -= q * std::log(q);
    }
    return h;
}

/// Gaussian entropy model per flow state. The defaults are placeholders, not
/// fitted to any real capture.
struct EntropyModel {
    double mu0 = 1.0;
    double sigma0 = 0.2;
    double mu1 = 1.8;
    double sigma1 = 0.3;

    void validate() const {
        if (!(sigma0 > 0.0) || !(sigma1 > 0.0)) throw std::invalid_argument("traffic: sigma must be positive");
        if (!std::isfinite(mu0) || !std::isfinite(mu1)) throw std::invalid_argument("traffic: mu must be finite");
    }
};

/// One entropy stream per flow, indexed by flow_id - 1 (flows are 1..M).
inline std::vector<std::vector<double>> generate_flows(int flows, int anomalous_id, const EntropyModel& model,
                                                       int intervals_per_request, std::uint64_t seed) {
    model.validate();
    if (anomalous_id < 1 || anomalous_id > flows) throw std::invalid_argument("anomalous flow id out of range");
    if (intervals_per_request < 0) throw std::invalid_argument("negative interval count");
    Rng rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<std::vector<double>> out(static_cast<std::size_t>(flows));
    for (int f = 1; f <= flows; ++f) {
        const bool bad = f == anomalous_id;
        auto& s = out[static_cast<std::size_t>(f - 1)];
        for (int i = 0; i < intervals_per_request; ++i)
            s.push_back((bad ? model.mu1 : model.mu0) + (bad ? model.sigma1 : model.sigma0) * z(rng));
    }
    return out;
}

/// Packet sizes used by the histogram synthesizer.
inline std::vector<long> packet_size_alphabet() {
    std::vector<long> sizes;
    for (long s = 40; sizes.size() < 64; s += 23) sizes.push_back(s);
    return sizes;
}

namespace detail {

/// Proportions q_i ∝ exp(-β i) over n symbols with entropy `target`.
inline std::vector<double> geometric_profile(std::size_t n, double target) {
    auto profile = [n](double beta) {
        std::vector<double> q(n);
        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i) z += (q[i] = std::exp(-beta * static_cast<double>(i)));
        for (double& v : q) v /= z;
        return q;
    };
    auto entropy = [](const std::vector<double>& q) {
        double h = 0.0;
        for (double v : q)
            if (v > 0.0) h -= v * std::log(v);
        return h;
    };
    double lo = 0.0, hi = 60.0;  // entropy decreases in β
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (entropy(profile(mid)) > target) lo = mid;
        else hi = mid;
    }
    return profile(0.5 * (lo + hi));
}

}  // namespace detail

/// A histogram of `packets` packets whose proportions have entropy `target`
/// (clamped into the attainable range) before multinomial sampling noise.
inline FlowInterval synthesize_interval(long flow_id, long interval, double target, long packets, Rng& rng) {
    if (packets < 1) throw std::invalid_argument("traffic.packets: need at least one packet");
    const auto sizes = packet_size_alphabet();
    const double h_max = std::log(static_cast<double>(sizes.size()));
    target = std::clamp(target, 1e-3, h_max - 1e-3);
    const auto q = detail::geometric_profile(sizes.size(), target);
    std::discrete_distribution<std::size_t> pick(q.begin(), q.end());
    FlowInterval iv{flow_id, interval, {}};
    for (long p = 0; p < packets; ++p) ++iv.histogram[sizes[pick(rng)]];
    return iv;
}

/// Observation source for the simulator: Gaussian entropy draws, or the
/// sample entropy of a synthesized packet histogram when `packets` > 0.
inline DrawFn entropy_draw(const EntropyModel& model, long packets = 0) {
    model.validate();
    return [model, packets](bool anomalous, Rng& rng) {
        std::normal_distribution<double> z(0.0, 1.0);
        const double y = anomalous ? model.mu1 + model.sigma1 * z(rng) : model.mu0 + model.sigma0 * z(rng);
        if (packets <= 0) return y;
        return interval_entropy(synthesize_interval(0, 0, y, packets, rng));
    };
}

struct FlowCsvError : std::runtime_error {
    FlowCsvError(long line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line(line) {}
    long line;
};

namespace detail {

inline long parse_long(const std::string& text, long line, const char* field) {
    std::size_t used = 0;
    long v = 0;
    try {
        v = std::stol(text, &used);
    } catch (const std::exception&) {
        throw FlowCsvError(line, std::string("non-integer ") + field + " '" + text + "'");
    }
    if (used != text.size()) throw FlowCsvError(line, std::string("non-integer ") + field + " '" + text + "'");
    return v;
}

}  // namespace detail

/// Reads `flow_id,interval,hist` rows; `hist` is `size:count` pairs joined
/// by `;`. A header row is optional.
inline std::vector<FlowInterval> read_flow_csv(std::istream& in) {
    std::vector<FlowInterval> out;
    std::string row;
    long line = 0;
    while (std::getline(in, row)) {
        ++line;
        if (!row.empty() && row.back() == '\r') row.pop_back();
        if (row.empty()) continue;
        if (line == 1 && row.rfind("flow_id", 0) == 0) continue;
        std::vector<std::string> cols;
        std::stringstream ss(row);
        std::string col;
        while (std::getline(ss, col, ',')) cols.push_back(col);
        if (cols.size() != 3) throw FlowCsvError(line, "expected 3 columns, got " + std::to_string(cols.size()));
        FlowInterval iv;
        iv.flow_id = detail::parse_long(cols[0], line, "flow_id");
        iv.interval = detail::parse_long(cols[1], line, "interval");
        std::stringstream hs(cols[2]);
        std::string pair;
        long total = 0;
        while (std::getline(hs, pair, ';')) {
            const auto colon = pair.find(':');
            if (colon == std::string::npos) throw FlowCsvError(line, "histogram entry '" + pair + "' lacks ':'");
            const long size = detail::parse_long(pair.substr(0, colon), line, "packet size");
            const long count = detail::parse_long(pair.substr(colon + 1), line, "count");
            if (count < 0) throw FlowCsvError(line, "negative count for size " + std::to_string(size));
            iv.histogram[size] += count;
            total += count;
        }
        if (total < 1) throw FlowCsvError(line, "interval holds no packets");
        out.push_back(std::move(iv));
    }
    return out;
}

inline std::vector<FlowInterval> ingest_flow_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open flow file " + path);
    return read_flow_csv(in);
}

inline void write_entropy_csv(std::ostream& os, std::span<const FlowInterval> intervals) {
    os << "flow_id,interval,entropy\n";
    for (const auto& iv : intervals)
        os << iv.flow_id << ',' << iv.interval << ',' << format_number(interval_entropy(iv)) << '\n';
}

inline void write_flow_csv(std::ostream& os, std::span<const FlowInterval> intervals) {
    os << "flow_id,interval,hist\n";
    for (const auto& iv : intervals) {
        os << iv.flow_id << ',' << iv.interval << ',';
        bool first = true;
        for (const auto& [size, count] : iv.histogram) {
            os << (first ? "" : ";") << size << ':' << count;
            first = false;
        }
        os << '\n';
    }
}

/// Search environment for the entropy model: two-parameter Gaussian with
/// the normal/abnormal split halfway between the two means and standard
/// deviations bounded below by `sigma_floor`.
inline EnvConfig entropy_env(int flows, const EntropyModel& model, double sigma_floor = 0.05,
                             double half_width = 1e-3) {
    model.validate();
    if (!(sigma_floor > 0.0) || sigma_floor >= std::min(model.sigma0, model.sigma1))
        throw std::invalid_argument("traffic.sigma_floor: must be positive and below both model sigmas");
    EnvConfig env;
    env.cells = flows;
    env.probes = 1;
    env.anomalies = 1;
    env.family = Family::gaussian_mean_var();
    env.true_theta0 = Param{model.mu0, model.sigma0};
    env.true_theta1 = Param{model.mu1, model.sigma1};
    const auto split = ParameterSpace::split_at_midpoint(env.family, env.true_theta0, env.true_theta1, half_width);
    auto floor_sigma = [&](Region r) {
        r.axes[1] = {Interval{sigma_floor, kInf, true, false}};
        return r;
    };
    env.space = ParameterSpace(floor_sigma(split.theta0()), floor_sigma(split.theta1()), floor_sigma(split.full()));
    return env;
}

}  // namespace seqsearch
