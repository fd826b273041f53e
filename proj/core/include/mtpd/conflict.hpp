#pragma once

#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtpd/importance.hpp"

namespace mtpd {

/// (a * b) / (|a| |b| + eps). Close to +1 for agreeing signs, -1 for opposing
/// signs, and close to 0 once either magnitude is small against eps.
double gradient_similarity(double a, double b, double eps);

/// max(0, -min(sims)).
double penalty_from_similarities(std::span<const double> sims);

struct TaskPairSimilarity {
    Task first;
    Task second;
    std::vector<double> sim;  // per channel
};

struct ConflictReport {
    std::string layer_id;
    std::vector<TaskPairSimilarity> pairwise_sim;  // every unordered task pair, once
    std::vector<double> penalty;

    /// Similarity array for a pair in either order.
    const std::vector<double>& similarity(Task a, Task b) const;
};

/// Channel-wise conflict penalty over all unordered pairs of the given
/// per-task average gradients. Needs at least two tasks.
std::vector<double> conflict_penalty(std::span<const std::vector<double>> per_task_avg_grad, double eps);

ConflictReport conflict_report(const ChannelStatistics& stats, double eps);

nlohmann::json conflict_record(const ConflictReport& report);
ConflictReport parse_conflict_record(const nlohmann::json& record);

}  // namespace mtpd
