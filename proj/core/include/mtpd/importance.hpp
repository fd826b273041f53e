#pragma once

#include <array>
#include <cstddef>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtpd/task.hpp"
#include "mtpd/tensor.hpp"

namespace mtpd {

/// Running per-channel accumulators for one prunable layer.
///
/// importance[t][c] is the mean of |a * g| over every (sample, row, column)
/// position seen so far for task t; avg_grad[t][c] is the mean of the signed
/// gradient over the same positions.
struct ChannelStatistics {
    std::string layer_id;
    std::size_t channels = 0;
    PerTask<std::vector<double>> importance;
    PerTask<std::vector<double>> avg_grad;
    PerTask<std::size_t> positions{};     // (N, H, W) positions folded in per task
    PerTask<std::size_t> sample_count{};  // batches folded in per task

    ChannelStatistics() = default;
    ChannelStatistics(std::string layer, std::size_t channel_count);

    bool ready() const;  // every task has at least one batch
};

/// Folds one batch of activations and their loss gradients (both [N, C, H, W])
/// into the running means for `task`.
void accumulate(ChannelStatistics& stats, Task task, const Tensor& activations, const Tensor& gradients);
/// Same, with the task given by name; unknown names raise ConfigError.
void accumulate(ChannelStatistics& stats, std::string_view task, const Tensor& activations, const Tensor& gradients);

/// Min-max to [0, 1]; a constant input maps to all 0.5.
std::vector<double> min_max_normalize(std::span<const double> values);

/// Per-task min-max computed jointly over every channel of every layer in `stats`.
/// Result is indexed [layer][task][channel].
std::vector<PerTask<std::vector<double>>> normalize_per_task(std::span<const ChannelStatistics> stats);

/// -tau * log(sum_t exp(-x_t / tau)), shifted by min(x) for stability.
double softmin(std::span<const double> values, double tau);
/// Channel-wise softmin across the given per-task arrays.
std::vector<double> softmin_aggregate(std::span<const std::vector<double>> per_task, double tau);

struct AggregatedImportance {
    std::string layer_id;
    PerTask<std::vector<double>> normalized;
    std::vector<double> unified;
    std::vector<double> i_max;
    std::vector<double> i_avg;
};

std::vector<AggregatedImportance> aggregate_importance(std::span<const ChannelStatistics> stats, double tau);

// Stats-file records: one JSON object per line, keys in sorted order.
nlohmann::json importance_record(const ChannelStatistics& stats, Task task);
/// Merges one "importance" record into `stats`, initialising it on first use.
void merge_importance_record(ChannelStatistics& stats, const nlohmann::json& record);

}  // namespace mtpd
