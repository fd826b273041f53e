#include <gtest/gtest.h>

#include <fstream>

#include "mtpd/config.hpp"
#include "mtpd/error.hpp"
#include "test_support.hpp"

namespace {

using namespace mtpd;
using nlohmann::json;

TEST(Config, DefaultsMatchTheMethodSettings) {
    const PipelineConfig c;
    EXPECT_EQ(c.pruning.tau, 0.25);
    EXPECT_EQ(c.pruning.eps, 1e-12);
    EXPECT_EQ(c.pruning.plan.thresholds.max_importance, 0.2);
    EXPECT_EQ(c.pruning.plan.thresholds.avg_importance, 0.2);
    EXPECT_EQ(c.pruning.plan.thresholds.penalty, 0.3);
    EXPECT_EQ(c.pruning.plan.penalty_weight, 0.2);
    EXPECT_EQ(c.pruning.plan.rate, 0.4);
    EXPECT_EQ(c.pruning.plan.granularity, 8u);
    EXPECT_EQ(c.pruning.calibration_batches, 32u);
    EXPECT_EQ(c.distill.beta, 1.0);
    EXPECT_DOUBLE_EQ(c.distill.warmup_ratio, 5.0 / 125.0);
    EXPECT_EQ(c.distill.lr, 0.05);
}

TEST(Config, EchoRoundTrips) {
    PipelineConfig c;
    c.seed = 99;
    c.distill.warmup_epochs = 2;
    c.distill.projection_dim = 16;
    c.pruning.plan.use_conflict_penalty = false;
    const PipelineConfig back = PipelineConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json(), c.to_json());
    EXPECT_EQ(back.seed, 99u);
    EXPECT_EQ(back.distill.warmup_epochs, std::optional<std::size_t>(2));
    EXPECT_EQ(PipelineConfig::from_json(json::object()).to_json(), PipelineConfig().to_json());
}

TEST(Config, StrictParsing) {
    EXPECT_THROW(PipelineConfig::from_json({{"sed", 1}}), ConfigError);
    EXPECT_THROW(PipelineConfig::from_json({{"pruning", {{"tau", 0.25}, {"temperature", 1}}}}), ConfigError);
    EXPECT_THROW(PipelineConfig::from_json({{"pruning", {{"tau", "hot"}}}}), ConfigError);
    EXPECT_THROW(PipelineConfig::from_json({{"pruning", 3}}), ConfigError);
    EXPECT_THROW(PipelineConfig::from_json({{"distill", {{"pairs", {{"a"}}}}}}), ConfigError);
    EXPECT_THROW(PipelineConfig::from_json(json::array()), ConfigError);
}

TEST(Config, ValidationRejectsBadValues) {
    EXPECT_THROW(PipelineConfig::from_json({{"pruning", {{"rate", 1.0}}}}), ConfigError);
    EXPECT_THROW(PipelineConfig::from_json({{"pruning", {{"tau", 0.0}}}}), ConfigError);
    EXPECT_THROW(PipelineConfig::from_json({{"pruning", {{"lambda", -1.0}}}}), ConfigError);
    EXPECT_THROW(PipelineConfig::from_json({{"distill", {{"beta", -1.0}}}}), ConfigError);
    EXPECT_THROW(PipelineConfig::from_json({{"distill", {{"pairs", json::array()}}}}), ConfigError);
    EXPECT_NO_THROW(PipelineConfig::from_json({{"distill", {{"pairs", json::array()}, {"beta", 0.0}}}}));
    EXPECT_THROW(PipelineConfig::from_json({{"dataset", {{"n_train", 0}}}}), ConfigError);
}

TEST(Config, LoadFile) {
    mtpd::testing::ScratchDir dir("config");
    EXPECT_THROW(load_config(dir / "missing.json"), ConfigError);
    std::ofstream(dir / "bad.json") << "{ not json";
    EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
    std::ofstream(dir / "ok.json") << R"({"seed": 3, "paths": {"dir": "out"}})";
    const PipelineConfig c = load_config(dir / "ok.json");
    EXPECT_EQ(c.seed, 3u);
    EXPECT_EQ(c.paths.resolve(c.paths.plan), std::filesystem::path("out") / "plan.json");
    EXPECT_EQ(c.paths.resolve("/abs/x"), std::filesystem::path("/abs/x"));
}

TEST(Config, ShippedDefaultFileEqualsBuiltInDefaults) {
    const PipelineConfig c = load_config(MTPD_SOURCE_DIR "/configs/default.json");
    EXPECT_EQ(c.to_json(), PipelineConfig().to_json());
}

}  // namespace
