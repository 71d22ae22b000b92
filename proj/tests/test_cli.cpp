#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "condgp/cli.hpp"

using namespace condgp;

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "condgp");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = parse_and_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("condgp_cli_" + name);
    fs::remove_all(d);
    return d;
}

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) ++n;
    return n;
}

}  // namespace

TEST(Cli, HelpListsCommandsAndKeys) {
    const auto r = run_cli({"--help"});
    EXPECT_EQ(r.code, kExitOk);
    for (const char* cmd : {"gen-data", "fit", "condition", "run", "mc", "sweep", "validate"})
        EXPECT_NE(r.out.find(cmd), std::string::npos) << cmd;
    for (const auto& k : config_keys()) {
        EXPECT_NE(r.out.find(k.key), std::string::npos) << k.key;
        EXPECT_NE(r.out.find(std::string("[") + k.unit + "]"), std::string::npos) << k.unit;
    }
}

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run_cli({}).code, kExitConfig);
    EXPECT_EQ(run_cli({"frobnicate"}).code, kExitConfig);
    EXPECT_EQ(run_cli({"run", "--config", "/nonexistent/file.json"}).code, kExitConfig);
    EXPECT_EQ(run_cli({"run", "--bogus"}).code, kExitConfig);
}

TEST(Cli, UnknownKeyIsNamed) {
    const auto dir = fresh_dir("unknown");
    const auto r = run_cli({"run", "--quiet", "--out", dir.string(), "--override", "npp=5"});
    EXPECT_EQ(r.code, kExitConfig);
    EXPECT_NE(r.err.find("npp"), std::string::npos);
    const auto v = run_cli({"run", "--quiet", "--out", dir.string(), "--override", "filter.lambda_f=2"});
    EXPECT_EQ(v.code, kExitConfig);
    EXPECT_NE(v.err.find("filter.lambda_f"), std::string::npos);
    fs::remove_all(dir);
}

TEST(Cli, OnlineRunOnSincIsConfigError) {
    const auto dir = fresh_dir("sinc_run");
    EXPECT_EQ(run_cli({"run", "--quiet", "--preset", "sinc", "--out", dir.string()}).code, kExitConfig);
    fs::remove_all(dir);
}

TEST(Cli, RuntimeFailureExitsOne) {
    const auto blocker = fs::temp_directory_path() / "condgp_cli_blocker";
    fs::remove_all(blocker);
    std::ofstream(blocker) << "not a directory";
    EXPECT_EQ(run_cli({"gen-data", "--quiet", "--out", blocker.string()}).code, kExitRuntime);
    fs::remove(blocker);
}

TEST(Cli, ConditionPrintsScree) {
    const auto dir = fresh_dir("condition");
    const auto r = run_cli({"condition", "--quiet", "--preset", "sinc", "--out", dir.string()});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    std::istringstream in(r.out);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "m,sigma_m,cumulative_energy");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 30u);
    const auto study = dir / "sinc";
    for (const char* f : {"config.json", "models.json", "basis.json", "scree.csv"})
        EXPECT_TRUE(fs::exists(study / f)) << f;
    fs::remove_all(dir);
}

TEST(Cli, GenDataFitAndSweep) {
    const auto dir = fresh_dir("offline");
    const std::vector<std::string> common{"--quiet", "--preset", "sinc", "--out", dir.string(),
                                          "--override", "name=s", "offline.realizations=4", "sweep.d_max=8"};
    auto with = [&](const std::string& cmd) {
        std::vector<std::string> a{cmd};
        a.insert(a.end(), common.begin(), common.end());
        return run_cli(a);
    };
    ASSERT_EQ(with("gen-data").code, kExitOk);
    EXPECT_EQ(line_count(dir / "s" / "data.csv"), 1u + 4u * 200u);
    ASSERT_EQ(with("fit").code, kExitOk);
    EXPECT_TRUE(fs::exists(dir / "s" / "models.json"));
    ASSERT_EQ(with("sweep").code, kExitOk);
    EXPECT_EQ(line_count(dir / "s" / "dof_sweep.csv"), 9u);
    fs::remove_all(dir);
}

TEST(Cli, RunIsReproducibleFromItsConfig) {
    const auto dir = fresh_dir("run");
    const auto r = run_cli({"run", "--quiet", "--seed", "4", "--out", dir.string(), "--override", "name=r",
                            "schedule.steps=120", "schedule.switch_step=60"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const auto study = dir / "r";
    EXPECT_EQ(line_count(study / "steps.csv"), 121u);
    const json summary = json::parse(std::ifstream(study / "run_summary.json"));
    EXPECT_EQ(summary["seed"], 4);
    EXPECT_EQ(summary["steps_completed"], 120);

    const auto cfg = load_config((study / "config.json").string(), {});
    EXPECT_EQ(cfg.seed, 4u);
    EXPECT_EQ(cfg.schedule.steps, 120u);
    fs::remove_all(dir);
}

TEST(Cli, MonteCarloWritesOneDirectoryPerRun) {
    const auto dir = fresh_dir("mc");
    const auto r = run_cli({"mc", "--quiet", "--out", dir.string(), "--override", "runs=5", "seed=7", "name=m",
                            "schedule.steps=60", "schedule.switch_step=30"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const auto study = dir / "m";
    for (std::size_t i = 0; i < 5; ++i) {
        const auto run = study / run_dir_name(i);
        EXPECT_TRUE(fs::exists(run / "steps.csv")) << i;
        EXPECT_EQ(load_config((run / "config.json").string(), {}).seed, 7u + i);
    }
    EXPECT_FALSE(fs::exists(study / run_dir_name(5)));
    EXPECT_EQ(line_count(study / "mc_summary.csv"), 61u);
    EXPECT_TRUE(fs::exists(study / "mc_summary.json"));
    fs::remove_all(dir);
}
