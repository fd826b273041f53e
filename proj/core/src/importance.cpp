#include "mtpd/importance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mtpd/error.hpp"

namespace mtpd {

ChannelStatistics::ChannelStatistics(std::string layer, std::size_t channel_count)
    : layer_id(std::move(layer)), channels(channel_count) {
    for (std::size_t t = 0; t < task_count; ++t) {
        importance[t].assign(channels, 0.0);
        avg_grad[t].assign(channels, 0.0);
    }
}

bool ChannelStatistics::ready() const {
    return std::all_of(sample_count.begin(), sample_count.end(), [](std::size_t n) { return n > 0; });
}

void accumulate(ChannelStatistics& stats, Task task, const Tensor& activations, const Tensor& gradients) {
    if (activations.shape() != gradients.shape()) {
        throw DimensionError("accumulate(" + stats.layer_id + "): activation shape " + shape_str(activations.shape()) +
                             " vs gradient shape " + shape_str(gradients.shape()));
    }
    if (activations.rank() != 4 || activations.dim(1) != stats.channels) {
        throw DimensionError("accumulate(" + stats.layer_id + "): expected [N, " + std::to_string(stats.channels) +
                             ", H, W], got " + shape_str(activations.shape()));
    }
    const std::size_t N = activations.dim(0), C = stats.channels, HW = activations.dim(2) * activations.dim(3);
    const std::size_t batch_positions = N * HW;
    if (batch_positions == 0) return;
    const auto a = activations.data();
    const auto g = gradients.data();
    const std::size_t ti = task_index(task);
    const double weight = static_cast<double>(batch_positions) /
                          static_cast<double>(stats.positions[ti] + batch_positions);
    for (std::size_t c = 0; c < C; ++c) {
        double abs_sum = 0.0, grad_sum = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const std::size_t base = (n * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) {
                abs_sum += std::fabs(a[base + i] * g[base + i]);
                grad_sum += g[base + i];
            }
        }
        const double inv = 1.0 / static_cast<double>(batch_positions);
        double& imp = stats.importance[ti][c];
        double& avg = stats.avg_grad[ti][c];
        imp += (abs_sum * inv - imp) * weight;
        avg += (grad_sum * inv - avg) * weight;
    }
    stats.positions[ti] += batch_positions;
    stats.sample_count[ti] += 1;
}

void accumulate(ChannelStatistics& stats, std::string_view task, const Tensor& activations, const Tensor& gradients) {
    accumulate(stats, parse_task(task), activations, gradients);
}

std::vector<double> min_max_normalize(std::span<const double> values) {
    std::vector<double> out(values.size(), 0.5);
    if (values.empty()) return out;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) return out;
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = std::clamp((values[i] - *lo) / range, 0.0, 1.0);
    return out;
}

std::vector<PerTask<std::vector<double>>> normalize_per_task(std::span<const ChannelStatistics> stats) {
    std::vector<PerTask<std::vector<double>>> out(stats.size());
    for (const auto& s : stats) {
        if (!s.ready()) throw ConfigError("normalize_per_task: layer '" + s.layer_id + "' has no accumulated batches");
    }
    for (std::size_t t = 0; t < task_count; ++t) {
        std::vector<double> pooled;
        for (const auto& s : stats) pooled.insert(pooled.end(), s.importance[t].begin(), s.importance[t].end());
        const auto normalized = min_max_normalize(pooled);
        std::size_t offset = 0;
        for (std::size_t l = 0; l < stats.size(); ++l) {
            const auto n = static_cast<std::ptrdiff_t>(stats[l].channels);
            out[l][t].assign(normalized.begin() + static_cast<std::ptrdiff_t>(offset),
                             normalized.begin() + static_cast<std::ptrdiff_t>(offset) + n);
            offset += stats[l].channels;
        }
    }
    return out;
}

double softmin(std::span<const double> values, double tau) {
    if (!(tau > 0.0)) throw ConfigError("softmin: temperature must be positive");
    if (values.empty()) throw ConfigError("softmin: no values");
    // Summing in sorted order makes the result independent of task order.
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double lo = sorted.front();
    double acc = 0.0;
    for (double v : sorted) acc += std::exp(-(v - lo) / tau);
    return lo - tau * std::log(acc);
}

std::vector<double> softmin_aggregate(std::span<const std::vector<double>> per_task, double tau) {
    if (!(tau > 0.0)) throw ConfigError("softmin_aggregate: temperature must be positive");
    if (per_task.empty()) throw ConfigError("softmin_aggregate: no tasks");
    const std::size_t C = per_task[0].size();
    for (const auto& v : per_task) {
        if (v.size() != C) throw DimensionError("softmin_aggregate: task arrays differ in length");
    }
    std::vector<double> out(C);
    std::vector<double> column(per_task.size());
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t t = 0; t < per_task.size(); ++t) column[t] = per_task[t][c];
        out[c] = softmin(column, tau);
    }
    return out;
}

std::vector<AggregatedImportance> aggregate_importance(std::span<const ChannelStatistics> stats, double tau) {
    const auto normalized = normalize_per_task(stats);
    std::vector<AggregatedImportance> out;
    out.reserve(stats.size());
    for (std::size_t l = 0; l < stats.size(); ++l) {
        AggregatedImportance a;
        a.layer_id = stats[l].layer_id;
        a.normalized = normalized[l];
        a.unified = softmin_aggregate(a.normalized, tau);
        const std::size_t C = stats[l].channels;
        a.i_max.assign(C, -std::numeric_limits<double>::infinity());
        a.i_avg.assign(C, 0.0);
        for (const auto& task_values : a.normalized) {
            for (std::size_t c = 0; c < C; ++c) {
                a.i_max[c] = std::max(a.i_max[c], task_values[c]);
                a.i_avg[c] += task_values[c] / static_cast<double>(task_count);
            }
        }
        out.push_back(std::move(a));
    }
    return out;
}

nlohmann::json importance_record(const ChannelStatistics& stats, Task task) {
    const std::size_t t = task_index(task);
    return {{"kind", "importance"},
            {"layer", stats.layer_id},
            {"task", task_name(task)},
            {"channels", stats.channels},
            {"importance", stats.importance[t]},
            {"avg_grad", stats.avg_grad[t]},
            {"positions", stats.positions[t]},
            {"sample_count", stats.sample_count[t]}};
}

void merge_importance_record(ChannelStatistics& stats, const nlohmann::json& record) {
    try {
        const auto layer = record.at("layer").get<std::string>();
        const auto channels = record.at("channels").get<std::size_t>();
        if (stats.channels == 0) {
            stats = ChannelStatistics(layer, channels);
        } else if (stats.layer_id != layer || stats.channels != channels) {
            throw ConfigError("stats: record for '" + layer + "' merged into '" + stats.layer_id + "'");
        }
        const std::size_t t = task_index(parse_task(record.at("task").get<std::string>()));
        auto imp = record.at("importance").get<std::vector<double>>();
        auto grad = record.at("avg_grad").get<std::vector<double>>();
        if (imp.size() != channels || grad.size() != channels) {
            throw ConfigError("stats: array length disagrees with channel count for '" + layer + "'");
        }
        stats.importance[t] = std::move(imp);
        stats.avg_grad[t] = std::move(grad);
        stats.positions[t] = record.at("positions").get<std::size_t>();
        stats.sample_count[t] = record.at("sample_count").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("stats: malformed importance record: ") + e.what());
    }
}

}  // namespace mtpd
