#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "mtpd/conflict.hpp"
#include "mtpd/importance.hpp"
#include "mtpd/model.hpp"

namespace mtpd {

struct SafetyThresholds {
    double max_importance = 0.2;
    double avg_importance = 0.2;
    double penalty = 0.3;

    bool operator==(const SafetyThresholds&) const = default;
};

struct PruningConfig {
    SafetyThresholds thresholds;
    double penalty_weight = 0.2;  // lambda
    double rate = 0.4;
    std::size_t granularity = 8;
    bool use_conflict_penalty = true;

    bool operator==(const PruningConfig&) const = default;
};

inline constexpr double unsafe_score = std::numeric_limits<double>::infinity();

/// A channel may be pruned only when no task relies on it
/// (i_max < max_importance) and it is either weak on average or conflicting.
bool safe_gate(double i_max, double i_avg, double penalty, const SafetyThresholds& thresholds);

/// unified - lambda * penalty for safe channels, +inf otherwise.
double pruning_score(double unified, double penalty, bool safe, double lambda);

struct ChannelSelection {
    std::vector<std::size_t> pruned;  // ascending channel indices
    std::size_t kept_count = 0;
    std::size_t target_prune = 0;     // what the rate and alignment asked for
    bool shortfall = false;           // fewer finite scores than target_prune
};

/// Keeps ceil(C * (1 - rate)) channels rounded up to a multiple of `granularity`
/// (capped at C) and prunes the lowest finite scores, lower index first on ties.
/// When there are not enough finite scores, prunes only those and flags a shortfall.
ChannelSelection select_channels(std::span<const double> scores, double rate, std::size_t granularity);

struct LayerPlan {
    std::string layer_id;
    std::size_t original_channels = 0;
    std::vector<double> scores;
    std::vector<bool> safe;
    std::vector<double> unified;
    std::vector<double> i_max;
    std::vector<double> i_avg;
    std::vector<double> penalty;
    std::vector<std::size_t> pruned_indices;
    std::size_t kept_count = 0;
    std::size_t target_prune = 0;
    bool shortfall = false;

    std::size_t unsafe_count() const;
    std::vector<std::size_t> kept_indices() const;
};

struct PruningPlan {
    std::vector<LayerPlan> layers;
    PruningConfig config;
    nlohmann::json provenance = nlohmann::json::object();  // teacher hash, stats hash, ...
    std::string plan_hash;

    const LayerPlan* find(const std::string& layer_id) const;
    bool empty() const;

    /// Content without plan_hash; the hash is SHA-256 of its compact dump.
    nlohmann::json body_json() const;
    nlohmann::json to_json() const;
    static PruningPlan from_json(const nlohmann::json& j);
    void seal();  // recomputes plan_hash
};

/// Builds a sealed plan from aggregated importance and conflict reports (matched
/// by layer id). With use_conflict_penalty off every penalty is taken as zero.
PruningPlan build_plan(std::span<const AggregatedImportance> importance, std::span<const ConflictReport> conflicts,
                       const PruningConfig& config);

/// Original channel indices that survive at the output of every layer, plus the graph input.
std::map<std::string, std::vector<std::size_t>> surviving_channels(const ModelGraph& graph, const PruningPlan& plan);

/// Structural surgery: drops pruned output filters of each planned conv and the
/// matching input slices of every conv/linear layer downstream of it.
Model apply_plan(const Model& model, const PruningPlan& plan);

/// Parameter count of the pruned graph from channel arithmetic alone.
std::size_t predicted_parameter_count(const ModelGraph& graph, const PruningPlan& plan);

}  // namespace mtpd
