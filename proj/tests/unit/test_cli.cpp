#include <gtest/gtest.h>

#include <json.hpp>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "gssl/config.hpp"
#include "support/oracles.hpp"

namespace gssl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

// Small enough that a full generate/train/eval cycle takes a few seconds.
std::vector<std::string> tiny_overrides() {
    return {"data.extent=16", "data.n_train=6", "data.n_test=4", "model.encoder_width1=4",
            "model.encoder_width2=8", "model.feature_dim=8", "model.projection_hidden=8",
            "train.steps_pretrain=8", "train.steps_ssl=4", "train.batch_source=2",
            "train.batch_target=2", "train.prototype_batch=2", "eval.validation_sizes=[1,2]",
            "eval.trials=3"};
}

std::vector<std::string> tiny_args(const fs::path& out) {
    std::vector<std::string> a = {"-o", out.string()};
    for (const auto& o : tiny_overrides()) {
        a.push_back("--set");
        a.push_back(o);
    }
    return a;
}

std::vector<std::string> with(std::vector<std::string> base, std::initializer_list<std::string> extra) {
    base.insert(base.end(), extra.begin(), extra.end());
    return base;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

TEST(Cli, UnknownFlagIsUsageError) {
    const Outcome o = run_cli({"--bogus", "generate-data"});
    EXPECT_EQ(o.code, cli::kUsageError);
    EXPECT_NE(o.err, "");
}

TEST(Cli, UnknownVerbIsUsageError) {
    EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kUsageError);
    EXPECT_EQ(run_cli({}).code, cli::kUsageError);
}

TEST(Cli, BadOverrideIsUsageErrorNamingThePath) {
    const fs::path dir = testing::temp_dir("cli_bad");
    const Outcome o = run_cli({"-o", dir.string(), "--set", "train.nope=1", "generate-data"});
    EXPECT_EQ(o.code, cli::kUsageError);
    EXPECT_NE(o.err.find("train.nope"), std::string::npos) << o.err;
    EXPECT_EQ(run_cli({"-o", dir.string(), "ablate", "NotAnAblation"}).code, cli::kUsageError);
    fs::remove_all(dir);
}

TEST(Cli, MissingInputIsRuntimeError) {
    const fs::path dir = testing::temp_dir("cli_missing");
    EXPECT_EQ(run_cli(with(tiny_args(dir), {"pretrain"})).code, cli::kRuntimeError);
    fs::remove_all(dir);
}

TEST(Cli, HelpSucceeds) {
    const Outcome o = run_cli({"--help"});
    EXPECT_EQ(o.code, cli::kSuccess);
    EXPECT_NE(o.out.find("generate-data"), std::string::npos);
}

class CliFlow : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = testing::temp_dir("cli_flow");
        ASSERT_EQ(run_cli(with(tiny_args(dir_), {"generate-data"})).code, cli::kSuccess);
        const Outcome t = run_cli(with(tiny_args(dir_), {"train"}));
        ASSERT_EQ(t.code, cli::kSuccess) << t.err;
    }
    static void TearDownTestSuite() { fs::remove_all(dir_); }
    static fs::path dir_;
};

fs::path CliFlow::dir_;

TEST_F(CliFlow, SnapshotMatchesResolvedConfig) {
    const ExperimentConfig expected = parse_config("", tiny_overrides());
    EXPECT_EQ(slurp(dir_ / "config.resolved.json"), config_to_json(expected));
    EXPECT_TRUE(fs::exists(dir_ / "checkpoints" / "final"));
    EXPECT_TRUE(fs::exists(dir_ / "checkpoints" / "pretrain"));
}

TEST_F(CliFlow, EvalWithTrainedThresholdReportsRow) {
    const Outcome o = run_cli(with(tiny_args(dir_), {"eval", "--use-trained-threshold"}));
    ASSERT_EQ(o.code, cli::kSuccess) << o.err;
    EXPECT_NE(o.out.find("trained gamma="), std::string::npos) << o.out;
    EXPECT_NE(o.out.find("f_beta="), std::string::npos) << o.out;
    const json summary = json::parse(slurp(dir_ / "eval" / "C" / "summary.json"));
    ASSERT_TRUE(summary["trained_gamma"].is_object());
    EXPECT_LE(summary["trained_gamma"]["f_beta"].get<double>(), summary["max_f05"].get<double>());
    EXPECT_TRUE(fs::exists(dir_ / "eval" / "C" / "records.gt"));
    EXPECT_TRUE(fs::exists(dir_ / "eval" / "C" / "config.resolved.json"));
}

TEST_F(CliFlow, SweepAndExportAgree) {
    ASSERT_EQ(run_cli(with(tiny_args(dir_), {"eval"})).code, cli::kSuccess);
    const fs::path records = dir_ / "eval" / "C" / "records.gt";
    ASSERT_EQ(run_cli(with(tiny_args(dir_), {"sweep", "--records", records.string()})).code, cli::kSuccess);
    const fs::path exported = dir_ / "exported" / "curve.csv";
    ASSERT_EQ(run_cli(with(tiny_args(dir_), {"export-curves", "--records", records.string(), "--output",
                                             exported.string()}))
                  .code,
              cli::kSuccess);
    const std::string curve = slurp(dir_ / "sweep" / "records" / "curve.csv");
    EXPECT_EQ(curve.rfind("threshold,tp,fp,tn,fn", 0), 0u);
    EXPECT_EQ(slurp(exported), curve);
    ASSERT_EQ(run_cli(with(tiny_args(dir_), {"sweep", "--domain", "B"})).code, cli::kSuccess);
    EXPECT_TRUE(fs::exists(dir_ / "sweep" / "B" / "curve.csv"));
}

TEST_F(CliFlow, ProtocolsWriteReports) {
    const Outcome o = run_cli(with(tiny_args(dir_), {"protocols"}));
    ASSERT_EQ(o.code, cli::kSuccess) << o.err;
    const json p = json::parse(slurp(dir_ / "protocols" / "protocols.json"));
    EXPECT_FALSE(p.empty());
    const json c = json::parse(slurp(dir_ / "protocols" / "cross_domain.json"));
    EXPECT_LE(c["delta_f05"].get<double>(), 0.0);
}

TEST(Cli, TrainedThresholdNeedsSslCheckpoint) {
    const fs::path dir = testing::temp_dir("cli_nossl");
    ASSERT_EQ(run_cli(with(tiny_args(dir), {"generate-data"})).code, cli::kSuccess);
    const auto args = with(tiny_args(dir), {"--set", "train.ablation=no_ssl"});
    ASSERT_EQ(run_cli(with(args, {"train"})).code, cli::kSuccess);
    const Outcome o = run_cli(with(args, {"eval", "--use-trained-threshold"}));
    EXPECT_EQ(o.code, cli::kRuntimeError);
    EXPECT_NE(o.err.find("gamma"), std::string::npos) << o.err;
    EXPECT_EQ(run_cli(with(args, {"eval"})).code, cli::kSuccess);
    fs::remove_all(dir);
}

TEST(Cli, RepeatedRunsProduceIdenticalTrees) {
    const fs::path a = testing::temp_dir("cli_twice_a"), b = testing::temp_dir("cli_twice_b");
    for (const fs::path& d : {a, b}) {
        for (const char* verb : {"generate-data", "train", "eval"}) {
            ASSERT_EQ(run_cli(with(tiny_args(d), {verb})).code, cli::kSuccess) << verb;
        }
        ASSERT_EQ(run_cli(with(tiny_args(d), {"sweep"})).code, cli::kSuccess);
    }
    std::string diff;
    EXPECT_TRUE(testing::same_tree(a, b, &diff)) << diff;
    fs::remove_all(a);
    fs::remove_all(b);
}

}  // namespace
}  // namespace gssl
