#pragma once

// Reference for structural surgery: leave every shape alone and zero the pruned
// filters (weights and bias) of each planned conv in a copy of the original model.

#include <cmath>
#include <random>

#include "mtpd/model.hpp"
#include "mtpd/pruner.hpp"
#include "test_support.hpp"

namespace mtpd::testing {

inline Model zero_masked(const Model& original, const PruningPlan& plan) {
    Model masked = original.clone();
    for (const auto& l : plan.layers) {
        Tensor& w = masked.mutable_parameters().at(l.layer_id + ".weight");
        Tensor& b = masked.mutable_parameters().at(l.layer_id + ".bias");
        const std::size_t per_filter = w.numel() / w.dim(0);
        for (std::size_t c : l.pruned_indices) {
            for (std::size_t i = 0; i < per_filter; ++i) w.data()[c * per_filter + i] = 0.0;
            b.data()[c] = 0.0;
        }
    }
    return masked;
}

/// Largest absolute difference over the three head outputs.
inline double max_head_difference(const Model& a, const Model& b, const Tensor& images) {
    NoGradGuard no_grad;
    const auto pa = a.forward(images).predictions;
    const auto pb = b.forward(images).predictions;
    double worst = 0.0;
    for (Task t : all_tasks) {
        const auto x = pa[t].data(), y = pb[t].data();
        if (x.size() != y.size()) return INFINITY;
        for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(x[i] - y[i]));
    }
    return worst;
}

/// Plan for the reference graph built from random statistics and a random rate.
inline PruningPlan random_plan(const ModelGraph& graph, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double skew = 1.0 + 5.0 * u(rng);
    const auto stats = random_statistics(graph, rng, skew);
    std::vector<ConflictReport> conflicts;
    for (const auto& s : stats) conflicts.push_back(conflict_report(s, 1e-12));
    PruningConfig config;
    config.rate = 0.05 + 0.9 * u(rng);
    config.use_conflict_penalty = u(rng) < 0.7;
    return build_plan(aggregate_importance(stats, 0.25), conflicts, config);
}

}  // namespace mtpd::testing
