#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "mtpd/config.hpp"
#include "mtpd/dataset.hpp"
#include "mtpd/distill.hpp"
#include "mtpd/importance.hpp"
#include "mtpd/conflict.hpp"
#include "mtpd/model.hpp"
#include "mtpd/pruner.hpp"
#include "mtpd/training.hpp"

namespace mtpd {

/// Independent generator seeds derived from the single config seed.
struct SeedPlan {
    std::uint64_t train_data;
    std::uint64_t val_data;
    std::uint64_t init;
    std::uint64_t shuffle;

    static SeedPlan from(std::uint64_t seed);
};

struct Datasets {
    std::vector<SyntheticSample> train;
    std::vector<SyntheticSample> val;
};

Datasets make_datasets(const PipelineConfig& config);

// ---- in-memory building blocks -------------------------------------------

/// Calibration: one forward per batch, then a separate backward pass per task.
/// Statistics are read at each prunable conv's feature point.
std::vector<ChannelStatistics> collect_statistics(const Model& model, std::span<const SyntheticSample> samples,
                                                  std::size_t batch_size, std::size_t calibration_batches);

std::vector<ConflictReport> conflict_reports(std::span<const ChannelStatistics> stats, double eps);

PruningPlan plan_from_statistics(std::span<const ChannelStatistics> stats, std::span<const ConflictReport> conflicts,
                                 const PruningSection& pruning);

/// Per distillation pair, the original channel index of every surviving student
/// channel. Pairs whose taps differ by name get an empty (identity) map.
std::vector<std::vector<std::size_t>> projection_channel_maps(const ModelGraph& teacher_graph, const PruningPlan& plan,
                                                              std::span<const DistillPair> pairs);

struct DistillEpochLog {
    std::size_t epoch = 0;  // 1-based
    PerTask<double> task{};
    double kd = 0;
    double total = 0;
    double beta_effective = 0;
};

/// Trains `student` in place against the frozen teacher for distill.epochs epochs.
std::vector<DistillEpochLog> distill_student(const Model& teacher, Model& student, const PruningPlan& plan,
                                             std::span<const SyntheticSample> train, const PipelineConfig& config);

/// Task-only training with the batch order distill_student uses.
std::vector<EpochLosses> fine_tune(Model& model, std::span<const SyntheticSample> train, const PipelineConfig& config);

/// Median wall time in milliseconds of a single-image forward pass.
double median_latency_ms(const Model& model, const SyntheticSample& sample, std::size_t runs);

nlohmann::json metrics_json(const EvalMetrics& m);
/// Row of the evaluation report. Latency is kept separate from the metrics so
/// reports can be compared with it stripped.
nlohmann::json report_row(const std::string& name, const EvalMetrics& m, const EvalMetrics& reference,
                          double latency_ms);

// ---- file-backed stages ----------------------------------------------------

struct TrainSummary {
    std::size_t epochs_run = 0;
    double initial_val_loss = 0;
    double final_val_loss = 0;
    bool stopped_on_plateau = false;
    std::filesystem::path checkpoint;
};

struct CollectSummary {
    std::size_t layers = 0;
    std::size_t importance_records = 0;
    std::size_t conflict_records = 0;
    std::size_t batches = 0;
    std::filesystem::path stats;
};

struct PruneSummary {
    std::size_t parameters_before = 0;
    std::size_t parameters_after = 0;
    std::size_t predicted_parameters = 0;
    double reduction_percent = 0;
    std::filesystem::path checkpoint;
};

struct DistillSummary {
    std::vector<DistillEpochLog> epochs;
    std::filesystem::path checkpoint;
};

TrainSummary run_train(const PipelineConfig& config);
CollectSummary run_collect(const PipelineConfig& config);
PruningPlan run_plan(const PipelineConfig& config);
PruneSummary run_prune(const PipelineConfig& config);
DistillSummary run_distill(const PipelineConfig& config);
/// Teacher plus whichever of the pruned and distilled checkpoints exist.
nlohmann::json run_eval(const PipelineConfig& config);
/// Four rows: teacher, Taylor-importance pruning, plus the conflict penalty, plus
/// distillation. Works from the teacher and stats files; writes into ablation_dir.
nlohmann::json run_ablation(const PipelineConfig& config);

// ---- stats file -------------------------------------------------------------

struct StatsFile {
    nlohmann::json meta;
    std::vector<ChannelStatistics> stats;
    std::vector<ConflictReport> conflicts;
};

std::string format_stats_file(const nlohmann::json& meta, std::span<const ChannelStatistics> stats,
                              std::span<const ConflictReport> conflicts);
StatsFile parse_stats_file(const std::string& text);

/// Human-readable per-layer summary: channels before and after, percent pruned, unsafe count.
std::string format_plan_table(const PruningPlan& plan);

/// Removes the latency fields so two reports can be compared for equality.
nlohmann::json strip_latency(nlohmann::json report);

}  // namespace mtpd
