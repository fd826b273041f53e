#include "mtpd/conflict.hpp"

#include <algorithm>
#include <cmath>

#include "mtpd/error.hpp"

namespace mtpd {

double gradient_similarity(double a, double b, double eps) {
    return (a * b) / (std::fabs(a) * std::fabs(b) + eps);
}

double penalty_from_similarities(std::span<const double> sims) {
    if (sims.empty()) throw ConfigError("conflict penalty needs at least one task pair");
    return std::max(0.0, -*std::min_element(sims.begin(), sims.end()));
}

const std::vector<double>& ConflictReport::similarity(Task a, Task b) const {
    for (const auto& p : pairwise_sim) {
        if ((p.first == a && p.second == b) || (p.first == b && p.second == a)) return p.sim;
    }
    throw ConfigError("conflict report for '" + layer_id + "' has no pair " + std::string(task_name(a)) + "/" +
                      std::string(task_name(b)));
}

std::vector<double> conflict_penalty(std::span<const std::vector<double>> per_task_avg_grad, double eps) {
    if (per_task_avg_grad.size() < 2) throw ConfigError("conflict_penalty: needs at least two tasks");
    if (!(eps > 0.0)) throw ConfigError("conflict_penalty: eps must be positive");
    const std::size_t C = per_task_avg_grad[0].size();
    for (const auto& g : per_task_avg_grad) {
        if (g.size() != C) throw DimensionError("conflict_penalty: task arrays differ in length");
    }
    std::vector<double> out(C);
    std::vector<double> sims;
    for (std::size_t c = 0; c < C; ++c) {
        sims.clear();
        for (std::size_t i = 0; i < per_task_avg_grad.size(); ++i)
            for (std::size_t j = i + 1; j < per_task_avg_grad.size(); ++j)
                sims.push_back(gradient_similarity(per_task_avg_grad[i][c], per_task_avg_grad[j][c], eps));
        out[c] = penalty_from_similarities(sims);
    }
    return out;
}

ConflictReport conflict_report(const ChannelStatistics& stats, double eps) {
    if (!stats.ready()) throw ConfigError("conflict_report: layer '" + stats.layer_id + "' has no accumulated batches");
    ConflictReport r;
    r.layer_id = stats.layer_id;
    for (std::size_t i = 0; i < task_count; ++i) {
        for (std::size_t j = i + 1; j < task_count; ++j) {
            TaskPairSimilarity p{all_tasks[i], all_tasks[j], std::vector<double>(stats.channels)};
            for (std::size_t c = 0; c < stats.channels; ++c)
                p.sim[c] = gradient_similarity(stats.avg_grad[i][c], stats.avg_grad[j][c], eps);
            r.pairwise_sim.push_back(std::move(p));
        }
    }
    r.penalty = conflict_penalty(stats.avg_grad, eps);
    return r;
}

nlohmann::json conflict_record(const ConflictReport& report) {
    nlohmann::json sims = nlohmann::json::object();
    for (const auto& p : report.pairwise_sim) {
        sims[std::string(task_name(p.first)) + "|" + std::string(task_name(p.second))] = p.sim;
    }
    return {{"kind", "conflict"}, {"layer", report.layer_id}, {"pairwise_sim", sims}, {"penalty", report.penalty}};
}

ConflictReport parse_conflict_record(const nlohmann::json& record) {
    try {
        ConflictReport r;
        r.layer_id = record.at("layer").get<std::string>();
        r.penalty = record.at("penalty").get<std::vector<double>>();
        for (const auto& [key, value] : record.at("pairwise_sim").items()) {
            const auto bar = key.find('|');
            if (bar == std::string::npos) throw ConfigError("stats: bad task pair key '" + key + "'");
            TaskPairSimilarity p{parse_task(key.substr(0, bar)), parse_task(key.substr(bar + 1)),
                                 value.get<std::vector<double>>()};
            if (p.sim.size() != r.penalty.size()) throw ConfigError("stats: conflict arrays differ in length");
            r.pairwise_sim.push_back(std::move(p));
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("stats: malformed conflict record: ") + e.what());
    }
}

}  // namespace mtpd
