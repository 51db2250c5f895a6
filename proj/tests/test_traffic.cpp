#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "seqsearch/traffic.hpp"

using namespace seqsearch;

namespace {

FlowInterval hist(std::map<long, long> h) { return FlowInterval{1, 0, std::move(h)}; }

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST(Entropy, ReferenceHistograms) {
    EXPECT_NEAR(interval_entropy(hist({{64, 2}, {1500, 2}})), 0.693147, 1e-6);
    EXPECT_DOUBLE_EQ(interval_entropy(hist({{576, 40}})), 0.0);
    EXPECT_NEAR(interval_entropy(hist({{40, 5}, {64, 5}, {576, 5}, {1500, 5}})), 1.386294, 1e-6);
    EXPECT_NEAR(interval_entropy(hist({{40, 3}, {64, 0}, {576, 1}})), -(0.75 * std::log(0.75) + 0.25 * std::log(0.25)),
                1e-12);
    EXPECT_THROW(interval_entropy(hist({})), std::domain_error);
    EXPECT_THROW(interval_entropy(hist({{64, 0}})), std::domain_error);
}

TEST(Entropy, InvariancesAndBounds) {
    Rng rng(4);
    std::uniform_int_distribution<long> size(40, 1500), count(0, 50);
    std::uniform_int_distribution<int> distinct(1, 12);
    for (int trial = 0; trial < 500; ++trial) {
        std::map<long, long> h;
        const int k = distinct(rng);
        while (static_cast<int>(h.size()) < k) h[size(rng)] = 1 + count(rng);
        const double y = interval_entropy(hist(h));
        EXPECT_GE(y, 0.0);
        EXPECT_LE(y, std::log(static_cast<double>(h.size())) + 1e-12);
        std::map<long, long> doubled, relabeled;
        long label = 0;
        for (const auto& [s, c] : h) {
            doubled[s] = 2 * c;
            relabeled[7919 - 3 * label++] = c;
        }
        EXPECT_NEAR(interval_entropy(hist(doubled)), y, 1e-12);
        EXPECT_NEAR(interval_entropy(hist(relabeled)), y, 1e-12);
    }
}

TEST(Generator, FlowsFollowTheirModelSide) {
    const EntropyModel model;
    const auto flows = generate_flows(3, 2, model, 100000, 11);
    ASSERT_EQ(flows.size(), 3u);
    for (std::size_t f : {0u, 2u}) {
        EXPECT_NEAR(mean_of(flows[f]), model.mu0, 3.0 * model.sigma0 / std::sqrt(1e5));
        EXPECT_NEAR(sd_of(flows[f]), model.sigma0, 0.005);
    }
    EXPECT_NEAR(mean_of(flows[1]), model.mu1, 3.0 * model.sigma1 / std::sqrt(1e5));
    EXPECT_NEAR(sd_of(flows[1]), model.sigma1, 0.005);
    EXPECT_EQ(generate_flows(3, 2, model, 50, 11), generate_flows(3, 2, model, 50, 11));
    EXPECT_NE(generate_flows(3, 2, model, 50, 11), generate_flows(3, 2, model, 50, 12));
    EXPECT_THROW(generate_flows(3, 0, model, 5, 1), std::invalid_argument);
    EXPECT_THROW(generate_flows(3, 4, model, 5, 1), std::invalid_argument);
    EXPECT_THROW(generate_flows(3, 1, EntropyModel{1.0, 0.0, 1.8, 0.3}, 5, 1), std::invalid_argument);
}

TEST(Generator, SynthesizedHistogramsTrackTargetEntropy) {
    Rng rng(21);
    const long packets = 400;
    std::vector<double> ys;
    for (int i = 0; i < 2000; ++i) {
        const FlowInterval iv = synthesize_interval(3, i, 1.8, packets, rng);
        long total = 0;
        for (const auto& [s, c] : iv.histogram) total += c;
        ASSERT_EQ(total, packets);
        ys.push_back(interval_entropy(iv));
    }
    // plug-in entropy is biased low by roughly (distinct sizes - 1) / (2 N)
    EXPECT_NEAR(mean_of(ys), 1.8, 0.05);
    const double m = mean_of(ys), s = sd_of(ys);
    double skew = 0.0;
    for (double y : ys) skew += std::pow((y - m) / s, 3);
    EXPECT_LT(std::abs(skew / static_cast<double>(ys.size())), 0.5);
}

TEST(Generator, PacketModeDrawsPassNormalitySanity) {
    const EntropyModel model;
    const DrawFn draw = entropy_draw(model, 200);
    Rng rng(5);
    std::vector<double> ys;
    for (int i = 0; i < 3000; ++i) ys.push_back(draw(false, rng));
    const double m = mean_of(ys), s = sd_of(ys);
    double skew = 0.0;
    for (double y : ys) skew += std::pow((y - m) / s, 3);
    EXPECT_LT(std::abs(skew / static_cast<double>(ys.size())), 0.5);
    EXPECT_NEAR(m, model.mu0, 0.06);
}

TEST(Generator, GaussianDrawWithoutPackets) {
    const EntropyModel model;
    const DrawFn draw = entropy_draw(model);
    Rng rng(6);
    std::vector<double> ys;
    for (int i = 0; i < 50000; ++i) ys.push_back(draw(true, rng));
    EXPECT_NEAR(mean_of(ys), model.mu1, 3.0 * model.sigma1 / std::sqrt(5e4));
    EXPECT_NEAR(sd_of(ys), model.sigma1, 0.006);
}

TEST(FlowCsv, ParsesReferenceRow) {
    std::istringstream in("flow_id,interval,hist\n7,12,64:30;1500:12\n");
    const auto rows = read_flow_csv(in);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].flow_id, 7);
    EXPECT_EQ(rows[0].interval, 12);
    EXPECT_EQ(rows[0].histogram, (std::map<long, long>{{64, 30}, {1500, 12}}));
    std::istringstream no_header("7,12,64:30\r\n8,1,40:1\n");
    EXPECT_EQ(read_flow_csv(no_header).size(), 2u);
}

TEST(FlowCsv, EmptyFileGivesEmptyStream) {
    std::istringstream in("");
    EXPECT_TRUE(read_flow_csv(in).empty());
}

TEST(FlowCsv, MalformedRowsNameTheirLine) {
    const std::pair<std::string, std::string> cases[] = {
        {"flow_id,interval,hist\n1,1,64:2\n2,1,64:-1\n", "line 3"},
        {"1,1\n", "line 1"},
        {"1,1,64:2\n1,2,64:x\n", "line 2"},
        {"1,1,64:2.5\n", "line 1"},
        {"1,1,64\n", "line 1"},
        {"1,1,64:0\n", "line 1"},
        {"a,1,64:1\n", "line 1"},
    };
    for (const auto& [text, where] : cases) {
        std::istringstream in(text);
        try {
            read_flow_csv(in);
            ADD_FAILURE() << "accepted: " << text;
        } catch (const FlowCsvError& e) {
            EXPECT_NE(std::string(e.what()).find(where), std::string::npos) << e.what();
        }
    }
}

TEST(FlowCsv, RoundTripThroughFiles) {
    Rng rng(8);
    std::vector<FlowInterval> ivs;
    for (int f = 1; f <= 3; ++f)
        for (int i = 0; i < 4; ++i) ivs.push_back(synthesize_interval(f, i, 1.0 + 0.2 * f, 200, rng));
    const auto path = std::filesystem::temp_directory_path() / "seqsearch_flows_roundtrip.csv";
    {
        std::ofstream out(path);
        write_flow_csv(out, ivs);
    }
    const auto back = ingest_flow_csv(path.string());
    std::filesystem::remove(path);
    ASSERT_EQ(back.size(), ivs.size());
    for (std::size_t i = 0; i < ivs.size(); ++i) {
        EXPECT_EQ(back[i].flow_id, ivs[i].flow_id);
        EXPECT_EQ(back[i].interval, ivs[i].interval);
        EXPECT_EQ(back[i].histogram, ivs[i].histogram);
    }
    std::ostringstream os;
    write_entropy_csv(os, std::span(back).first(1));
    EXPECT_EQ(os.str(), "flow_id,interval,entropy\n1,0," + format_number(interval_entropy(back[0])) + "\n");
    EXPECT_THROW(ingest_flow_csv("/nonexistent/flows.csv"), std::runtime_error);
}

TEST(EntropyEnv, RegionsAndSigmaFloor) {
    const EnvConfig env = entropy_env(10, EntropyModel{});
    env.validate();
    EXPECT_EQ(env.cells, 10);
    EXPECT_EQ(env.family.kind, FamilyKind::GaussianMeanVar);
    EXPECT_TRUE(env.space.theta0().contains(Param{1.0, 0.2}));
    EXPECT_TRUE(env.space.theta1().contains(Param{1.8, 0.3}));
    EXPECT_EQ(env.space.classify(Param{1.4, 0.2}), RegionKind::Indiff);
    EXPECT_FALSE(env.space.full().contains(Param{1.0, 0.01}));
    // a one-sample estimate has zero spread; it is raised to the floor
    SuffStats s(env.family);
    s.add(1.1);
    EXPECT_DOUBLE_EQ(mle_unconstrained(env.family, s, env.space.full()).second, 0.05);
    EXPECT_THROW(entropy_env(10, EntropyModel{}, 0.25), std::invalid_argument);
}
