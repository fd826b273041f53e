#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "mtpd/checkpoint.hpp"
#include "mtpd/digest.hpp"
#include "mtpd/pipeline.hpp"
#include "test_support.hpp"

namespace {

using namespace mtpd;
using nlohmann::json;

struct CliRun {
    int code;
    std::string out;
    std::string err;
};

CliRun cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

json small_config(const std::filesystem::path& dir) {
    return {{"dataset", {{"n_train", 32}, {"n_val", 16}, {"batch_size", 8}}},
            {"train", {{"epochs", 2}}},
            {"pruning", {{"calibration_batches", 4}}},
            {"distill", {{"epochs", 2}}},
            {"eval", {{"latency_runs", 2}}},
            {"paths", {{"dir", dir.string()}}}};
}

std::string write_config(const std::filesystem::path& path, const json& j) {
    std::ofstream(path) << j.dump(2);
    return path.string();
}

std::vector<json> jsonl(const std::filesystem::path& p) {
    std::vector<json> out;
    std::istringstream in(read_file(p));
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(json::parse(line));
    return out;
}

TEST(Cli, UsageErrorsAreConfigErrors) {
    EXPECT_EQ(cli({}).code, exit_config);
    EXPECT_EQ(cli({"squash", "--config", "x.json"}).code, exit_config);
    EXPECT_EQ(cli({"train"}).code, exit_config);
    EXPECT_EQ(cli({"plan", "--config", "/nonexistent/config.json"}).code, exit_config);
    EXPECT_EQ(cli({"train", "--config", "x.json", "--ablation"}).code, exit_config);
    EXPECT_EQ(cli({"--help"}).code, exit_ok);
}

TEST(Cli, UnknownConfigKey) {
    mtpd::testing::ScratchDir dir("cli-key");
    json j = small_config(dir.path());
    j["pruning"]["rates"] = 0.3;
    const auto r = cli({"train", "--config", write_config(dir / "c.json", j)});
    EXPECT_EQ(r.code, exit_config);
    EXPECT_NE(r.err.find("rates"), std::string::npos);
}

TEST(Cli, ZeroEpochsIsRefused) {
    mtpd::testing::ScratchDir dir("cli-zero");
    json j = small_config(dir.path());
    j["train"]["epochs"] = 0;
    const auto r = cli({"train", "--config", write_config(dir / "c.json", j)});
    EXPECT_EQ(r.code, exit_config);
    EXPECT_NE(r.err.find("no training performed"), std::string::npos);
}

TEST(Cli, DivergenceExitCode) {
    mtpd::testing::ScratchDir dir("cli-nan");
    json j = small_config(dir.path());
    j["train"]["lr"] = 1e200;
    const auto r = cli({"train", "--config", write_config(dir / "c.json", j)});
    EXPECT_EQ(r.code, exit_divergence) << r.err;
}

TEST(Cli, StageOrderViolations) {
    mtpd::testing::ScratchDir dir("cli-order");
    const std::string cfg = write_config(dir / "c.json", small_config(dir.path()));
    for (const char* stage : {"collect", "plan", "prune", "distill", "eval"}) {
        const auto r = cli({stage, "--config", cfg});
        EXPECT_EQ(r.code, exit_dependency) << stage << ": " << r.err;
        EXPECT_NE(r.err.find("run `prune-distill train`"), std::string::npos) << r.err;
    }
    ASSERT_EQ(cli({"train", "--config", cfg}).code, exit_ok);
    const auto prune = cli({"prune", "--config", cfg});
    EXPECT_EQ(prune.code, exit_dependency);
    EXPECT_NE(prune.err.find("plan"), std::string::npos);
    const auto plan = cli({"plan", "--config", cfg});
    EXPECT_EQ(plan.code, exit_dependency);
    EXPECT_NE(plan.err.find("collect"), std::string::npos);
}

class Pipeline : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new mtpd::testing::ScratchDir("cli-pipeline");
        config_ = write_config(*dir_ / "c.json", small_config(dir_->path()));
        for (const char* stage : {"train", "collect", "plan", "prune", "distill"}) {
            const auto r = cli({stage, "--config", config_});
            outputs_[stage] = r.out;
            ASSERT_EQ(r.code, exit_ok) << stage << ": " << r.err;
        }
    }
    static void TearDownTestSuite() { delete dir_; }

    static std::filesystem::path file(const std::string& name) { return *dir_ / name; }

    static mtpd::testing::ScratchDir* dir_;
    static std::string config_;
    static std::map<std::string, std::string> outputs_;
};

mtpd::testing::ScratchDir* Pipeline::dir_ = nullptr;
std::string Pipeline::config_;
std::map<std::string, std::string> Pipeline::outputs_;

TEST_F(Pipeline, TrainLogAndCheckpoint) {
    const auto log = jsonl(file("train_log.jsonl"));
    ASSERT_EQ(log.size(), 3u);
    EXPECT_LT(log.back()["val_total"].get<double>(), log.front()["val_total"].get<double>());
    const Checkpoint c = load_checkpoint(file("teacher.ckpt"));
    EXPECT_EQ(c.metadata.extra["config"]["dataset"]["n_train"], 32);
}

TEST_F(Pipeline, TrainingIsBitReproducible) {
    const std::string first = read_file(file("teacher.ckpt"));
    mtpd::testing::ScratchDir other("cli-rerun");
    json j = small_config(dir_->path());
    // Same config, outputs redirected by absolute path only for the checkpoint.
    j["paths"]["teacher"] = (other / "teacher.ckpt").string();
    j["paths"]["train_log"] = (other / "train_log.jsonl").string();
    const auto r = cli({"train", "--config", write_config(other / "c.json", j)});
    ASSERT_EQ(r.code, exit_ok);
    const Checkpoint a = deserialize_checkpoint(first);
    const Checkpoint b = load_checkpoint(other / "teacher.ckpt");
    EXPECT_EQ(a.model.checksum(), b.model.checksum());
    EXPECT_EQ(serialize_checkpoint(a.model, {}), serialize_checkpoint(b.model, {}));
}

TEST_F(Pipeline, StatsSchema) {
    const auto recs = jsonl(file("stats.jsonl"));
    std::size_t meta = 0, imp = 0, conf = 0;
    for (const auto& r : recs) {
        const auto kind = r["kind"].get<std::string>();
        meta += kind == "meta";
        conf += kind == "conflict";
        if (kind == "importance") {
            ++imp;
            for (double v : r["importance"]) EXPECT_GE(v, 0.0);
        }
    }
    EXPECT_EQ(meta, 1u);
    EXPECT_EQ(imp, 3u * 3u);
    EXPECT_EQ(conf, 3u);
    EXPECT_EQ(recs.front()["teacher_sha256"], sha256_file(file("teacher.ckpt")));
}

TEST_F(Pipeline, CollectAndPlanAreReproducible) {
    const std::string stats = read_file(file("stats.jsonl"));
    const std::string plan = read_file(file("plan.json"));
    ASSERT_EQ(cli({"collect", "--config", config_}).code, exit_ok);
    ASSERT_EQ(cli({"plan", "--config", config_}).code, exit_ok);
    EXPECT_EQ(read_file(file("stats.jsonl")), stats);
    EXPECT_EQ(read_file(file("plan.json")), plan);
}

TEST_F(Pipeline, PlanTableAndPruneReport) {
    const std::string& table = outputs_["plan"];
    for (const char* col : {"layer", "before", "after", "pruned %", "unsafe", "b1", "b2", "b3", "plan_hash"})
        EXPECT_NE(table.find(col), std::string::npos) << col;
    const std::string& prune = outputs_["prune"];
    EXPECT_NE(prune.find("parameters before 79400"), std::string::npos) << prune;
    EXPECT_NE(prune.find("% reduction"), std::string::npos);
    const PruningPlan plan = PruningPlan::from_json(json::parse(read_file(file("plan.json"))));
    EXPECT_EQ(plan.provenance["teacher_sha256"], sha256_file(file("teacher.ckpt")));
    EXPECT_EQ(plan.provenance["stats_sha256"], sha256_file(file("stats.jsonl")));
    EXPECT_EQ(load_checkpoint(file("pruned.ckpt")).metadata.plan_hash, plan.plan_hash);
}

TEST_F(Pipeline, DistillLog) {
    const auto log = jsonl(file("distill_log.jsonl"));
    ASSERT_EQ(log.size(), 2u);
    for (const char* key : {"epoch", "task", "kd", "total", "beta_effective", "lr", "seed"})
        EXPECT_TRUE(log[0].contains(key)) << key;
    EXPECT_EQ(log[0]["epoch"], 1);
}

TEST_F(Pipeline, EvalTeacherAgainstItselfIsZero) {
    ASSERT_EQ(cli({"eval", "--config", config_}).code, exit_ok);
    const json report = json::parse(read_file(file("report.json")));
    ASSERT_EQ(report["rows"].size(), 3u);
    const json& teacher = report["rows"][0];
    EXPECT_EQ(teacher["name"], "teacher");
    for (const auto& [k, v] : teacher["delta_vs_teacher"].items()) {
        if (v.is_object()) {
            for (const auto& [t, d] : v.items()) EXPECT_EQ(d.get<double>(), 0.0) << k << "." << t;
        } else {
            EXPECT_EQ(v.get<double>(), 0.0) << k;
        }
    }
    EXPECT_NE(report["note"].get<std::string>().find("not comparable"), std::string::npos);
    ASSERT_EQ(cli({"eval", "--config", config_}).code, exit_ok);
    EXPECT_EQ(strip_latency(json::parse(read_file(file("report.json")))), strip_latency(report));
}

TEST_F(Pipeline, AblationHasFourMonotoneRows) {
    const auto r = cli({"eval", "--config", config_, "--ablation"});
    ASSERT_EQ(r.code, exit_ok) << r.err;
    const json report = json::parse(read_file(file("ablation/report.json")));
    ASSERT_EQ(report["rows"].size(), 4u);
    const std::vector<std::string> names{"teacher", "+TCI", "+TCI+GCP", "+TCI+GCP+KD"};
    int prev = -1;
    for (std::size_t i = 0; i < 4; ++i) {
        const json& row = report["rows"][i];
        EXPECT_EQ(row["name"], names[i]);
        const int enabled = row["taylor_importance"].get<bool>() + row["conflict_penalty"].get<bool>() +
                            row["distillation"].get<bool>();
        EXPECT_EQ(enabled, prev + 1);
        prev = enabled;
    }
    EXPECT_LT(report["rows"][1]["metrics"]["parameters"].get<std::size_t>(), 79400u);
}

TEST_F(Pipeline, ProvenanceChainIsEnforced) {
    mtpd::testing::ScratchDir other("cli-provenance");
    for (const char* f : {"teacher.ckpt", "stats.jsonl", "plan.json", "pruned.ckpt"})
        std::filesystem::copy_file(file(f), other / f);
    const std::string cfg = write_config(other / "c.json", small_config(other.path()));
    ASSERT_EQ(cli({"distill", "--config", cfg}).code, exit_ok);

    // A different plan: the pruned checkpoint no longer matches it.
    json plan = json::parse(read_file(other / "plan.json"));
    PruningPlan p = PruningPlan::from_json(plan);
    p.provenance["note"] = "edited";
    p.seal();
    write_file(other / "plan.json", p.to_json().dump(2));
    auto r = cli({"distill", "--config", cfg});
    EXPECT_EQ(r.code, exit_dependency);
    EXPECT_NE(r.err.find("plan_hash"), std::string::npos) << r.err;

    // A retrained teacher: the plan's recorded hash no longer matches.
    std::filesystem::copy_file(file("plan.json"), other / "plan.json", std::filesystem::copy_options::overwrite_existing);
    json j = small_config(other.path());
    j["seed"] = 8;
    ASSERT_EQ(cli({"train", "--config", write_config(other / "c8.json", j)}).code, exit_ok);
    r = cli({"distill", "--config", cfg});
    EXPECT_EQ(r.code, exit_dependency);
    EXPECT_NE(r.err.find("teacher"), std::string::npos) << r.err;
    EXPECT_EQ(cli({"plan", "--config", cfg}).code, exit_dependency);
}

TEST_F(Pipeline, SeedOverride) {
    mtpd::testing::ScratchDir other("cli-seed");
    const std::string cfg = write_config(other / "c.json", small_config(other.path()));
    ASSERT_EQ(cli({"train", "--config", cfg, "--seed", "11"}).code, exit_ok);
    EXPECT_EQ(load_checkpoint(other / "teacher.ckpt").metadata.seed, 11u);
    EXPECT_NE(load_checkpoint(other / "teacher.ckpt").model.checksum(),
              load_checkpoint(file("teacher.ckpt")).model.checksum());
}

}  // namespace
