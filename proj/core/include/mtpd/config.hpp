#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "mtpd/distill.hpp"
#include "mtpd/model_graph.hpp"
#include "mtpd/pruner.hpp"

namespace mtpd {

struct DatasetConfig {
    std::size_t n_train = 512;
    std::size_t n_val = 128;
    std::size_t batch_size = 16;
};

struct TrainConfig {
    std::size_t epochs = 20;
    double lr = 0.05;
    std::size_t patience = 5;  // stop after this many epochs without a val improvement; 0 disables
};

struct PruningSection {
    double tau = 0.25;
    double eps = 1e-12;
    PruningConfig plan;
    std::size_t calibration_batches = 32;
};

struct DistillSection {
    std::vector<DistillPair> pairs{{"b2_relu", "b2_relu"}, {"b3_relu", "b3_relu"}, {"enc_relu", "enc_relu"}};
    double beta = 1.0;
    double warmup_ratio = 5.0 / 125.0;
    std::optional<std::size_t> warmup_epochs;  // overrides warmup_ratio when set
    std::size_t epochs = 20;
    double lr = 0.05;
    bool teacher_half_precision = true;
    std::optional<std::size_t> projection_dim;

    std::size_t resolved_warmup_epochs() const;
    DistillConfig to_distill_config() const;
};

struct EvalConfig {
    std::size_t latency_runs = 100;  // 0 skips the timing loop
};

struct PathsConfig {
    std::string dir = "run";
    std::string teacher = "teacher.ckpt";
    std::string stats = "stats.jsonl";
    std::string plan = "plan.json";
    std::string pruned = "pruned.ckpt";
    std::string student = "student.ckpt";
    std::string train_log = "train_log.jsonl";
    std::string distill_log = "distill_log.jsonl";
    std::string report = "report.json";
    std::string ablation_dir = "ablation";

    /// `name` relative to `dir` unless it is absolute.
    std::filesystem::path resolve(const std::string& name) const;
};

struct PipelineConfig {
    std::uint64_t seed = 7;
    DatasetConfig dataset;
    ArchitectureConfig model;
    TrainConfig train;
    PruningSection pruning;
    DistillSection distill;
    EvalConfig eval;
    PathsConfig paths;

    /// Full echo, every key present.
    nlohmann::json to_json() const;
    /// Strict: unknown keys and wrong types raise ConfigError; missing keys keep defaults.
    static PipelineConfig from_json(const nlohmann::json& j);
    void validate() const;
};

PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace mtpd
