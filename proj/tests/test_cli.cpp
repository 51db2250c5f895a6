#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "seqsearch/cli.hpp"

using namespace seqsearch;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_command(args, out, err);
    return {code, out.str(), err.str()};
}

std::string sample(const std::string& name) { return std::string(SEQSEARCH_SOURCE_DIR) + "/configs/" + name; }

fs::path scratch(const std::string& name) { return fs::temp_directory_path() / ("seqsearch_cli_" + name); }

fs::path write_file(const std::string& name, const std::string& text) {
    const fs::path p = scratch(name);
    std::ofstream(p) << text;
    return p;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

std::string strip_comments(const std::string& text) {
    std::string out;
    for (const auto& line : lines_of(text))
        if (line.empty() || line[0] != '#') out += line + '\n';
    return out;
}

// Small Gaussian setup that finishes quickly.
const char* kQuick =
    "env.cells = 4\nenv.family = gaussian\nenv.theta0 = 0\nenv.theta1 = 2\n"
    "policy.mode = known-null\npolicy.statistic = lallr\n"
    "sweep.grid = 0.1, 0.01, 0.001\nrun.runs = 60\nrun.seed = 5\n";

}  // namespace

TEST(Cli, ValidatePrintsResolvedConfig) {
    const Outcome o = run({"validate", "--config", sample("gaussian-known-null.conf")});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_NE(o.out.find("# threshold "), std::string::npos);
    EXPECT_NE(o.out.find("# max_slots "), std::string::npos);
    const std::string body = strip_comments(o.out);
    EXPECT_EQ(print_config(parse_config_text(body)), body);
}

TEST(Cli, SweepWritesOneRowPerLevel) {
    const fs::path cfg = write_file("quick.conf", kQuick);
    const Outcome o = run({"sweep", "--config", cfg.string(), "--workers", "2"});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto rows = lines_of(o.out);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0].rfind("threshold,criterion,", 0), 0u) << rows[0];
    EXPECT_EQ(rows[1].rfind("0.1,bayes,60,", 0), 0u) << rows[1];
    EXPECT_EQ(rows[3].rfind("0.001,bayes,60,", 0), 0u) << rows[3];
    fs::remove(cfg);
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
    const fs::path cfg = write_file("repeat.conf", kQuick);
    const Outcome a = run({"sweep", "--config", cfg.string(), "--workers", "1"});
    const Outcome b = run({"sweep", "--config", cfg.string(), "--workers", "3"});
    ASSERT_EQ(a.code, 0);
    EXPECT_EQ(a.out, b.out);
    const Outcome c = run({"sweep", "--config", cfg.string(), "--seed", "6"});
    EXPECT_NE(a.out, c.out);
    fs::remove(cfg);
}

TEST(Cli, CompareLabelsRowsByPolicy) {
    const fs::path cfg = write_file("compare.conf", std::string(kQuick) + "policy.mode = common-unknown-null\n");
    // duplicate key: the base config already sets policy.mode
    EXPECT_EQ(run({"compare", "--config", cfg.string()}).code, 2);
    const fs::path ok = write_file(
        "compare_ok.conf",
        "env.cells = 4\nenv.family = gaussian\nenv.theta0 = 0\nenv.theta1 = 2\npolicy.mode = common-unknown-null\n"
        "policy.statistic = mallr\nsweep.grid = 0.1, 0.01\nrun.runs = 40\n");
    const Outcome o = run({"compare", "--config", ok.string(), "ds", "chernoff", "ds:mgllr"});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto rows = lines_of(o.out);
    ASSERT_EQ(rows.size(), 7u);
    EXPECT_EQ(rows[0].rfind("policy,", 0), 0u) << rows[0];
    EXPECT_EQ(rows[1].rfind("ds,", 0), 0u);
    EXPECT_EQ(rows[3].rfind("chernoff,", 0), 0u);
    EXPECT_EQ(rows[5].rfind("ds:mgllr,", 0), 0u);
    const Outcome bad = run({"compare", "--config", ok.string(), "ds:nonsense"});
    EXPECT_EQ(bad.code, 2);
    EXPECT_NE(bad.err.find("policies"), std::string::npos) << bad.err;
    fs::remove(cfg);
    fs::remove(ok);
}

TEST(Cli, SimulateHonoursOutAndWorkerVariable) {
    const fs::path cfg = write_file("simulate.conf", kQuick);
    const fs::path out = scratch("simulate.csv");
    ::setenv("SEQSEARCH_WORKERS", "2", 1);
    const Outcome v = run({"validate", "--config", cfg.string()});
    EXPECT_NE(v.out.find("# workers 2"), std::string::npos);
    const Outcome o = run({"simulate", "--config", cfg.string(), "--out", out.string()});
    ::setenv("SEQSEARCH_WORKERS", "zero", 1);
    const Outcome bad = run({"simulate", "--config", cfg.string()});
    ::unsetenv("SEQSEARCH_WORKERS");
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_TRUE(o.out.empty());
    EXPECT_EQ(lines_of(read_file(out)).size(), 2u);
    EXPECT_EQ(bad.code, 2);
    EXPECT_NE(bad.err.find("SEQSEARCH_WORKERS"), std::string::npos);
    fs::remove(cfg);
    fs::remove(out);
}

TEST(Cli, ErrorsExitWithStatusTwo) {
    const fs::path cfg = write_file("bad.conf", "env.cells = 5\nenv.probez = 2\n");
    const Outcome o = run({"validate", "--config", cfg.string()});
    EXPECT_EQ(o.code, 2);
    EXPECT_NE(o.err.find("env.probez"), std::string::npos) << o.err;
    fs::remove(cfg);

    const fs::path good = write_file("good.conf", kQuick);
    const Outcome w = run({"simulate", "--config", good.string(), "--out", "/nonexistent/dir/x.csv"});
    EXPECT_EQ(w.code, 2);
    EXPECT_NE(w.err.find("cannot write"), std::string::npos) << w.err;
    EXPECT_EQ(run({"simulate", "--config", good.string(), "--runs", "0"}).code, 2);
    fs::remove(good);

    EXPECT_NE(run({"validate", "--config", "/nonexistent.conf"}).code, 0);
    EXPECT_NE(run({}).code, 0);
    EXPECT_NE(run({"frobnicate"}).code, 0);
}

TEST(Cli, TrafficFlowConversion) {
    const fs::path flows = write_file("flows.csv", "flow_id,interval,hist\n1,0,64:2;1500:2\n2,0,576:9\n");
    const Outcome o = run({"traffic-demo", "--flows", flows.string()});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto rows = lines_of(o.out);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0], "flow_id,interval,entropy");
    EXPECT_EQ(rows[1], "1,0," + format_number(std::log(2.0)));
    EXPECT_EQ(rows[2], "2,0," + format_number(0.0));
    const fs::path broken = write_file("broken.csv", "1,0,64:x\n");
    const Outcome b = run({"traffic-demo", "--flows", broken.string()});
    EXPECT_EQ(b.code, 2);
    EXPECT_NE(b.err.find("line 1"), std::string::npos) << b.err;
    fs::remove(flows);
    fs::remove(broken);
}

TEST(Cli, TrafficDemoRowsAndEmittedFlows) {
    const fs::path cfg = write_file("traffic.conf",
                                    "policy.mode = common-unknown-null\npolicy.statistic = mallr\n"
                                    "policy.level = 0.01\ntraffic.cells = 3, 4\nrun.runs = 30\n");
    const fs::path emitted = scratch("emitted.csv");
    const Outcome o = run({"traffic-demo", "--config", cfg.string(), "--emit-flows", emitted.string()});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto rows = lines_of(o.out);
    ASSERT_EQ(rows.size(), 5u);
    EXPECT_EQ(rows[0].rfind("policy,M,", 0), 0u) << rows[0];
    EXPECT_EQ(rows[1].rfind("ds,3,", 0), 0u);
    EXPECT_EQ(rows[2].rfind("openloop-glr,3,", 0), 0u);
    EXPECT_EQ(rows[4].rfind("openloop-glr,4,", 0), 0u);
    // the emitted histograms feed straight back into the converter
    const auto back = ingest_flow_csv(emitted.string());
    EXPECT_EQ(back.size(), 3u * 20u);
    EXPECT_EQ(run({"traffic-demo", "--flows", emitted.string()}).code, 0);
    fs::remove(cfg);
    fs::remove(emitted);
}
