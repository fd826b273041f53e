#include "mtpd/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mtpd/digest.hpp"
#include "mtpd/error.hpp"

namespace mtpd {

bool safe_gate(double i_max, double i_avg, double penalty, const SafetyThresholds& t) {
    return (i_max < t.max_importance) && (i_avg < t.avg_importance || penalty > t.penalty);
}

double pruning_score(double unified, double penalty, bool safe, double lambda) {
    if (lambda < 0.0) throw ConfigError("pruning_score: lambda must be non-negative");
    return safe ? unified - lambda * penalty : unsafe_score;
}

ChannelSelection select_channels(std::span<const double> scores, double rate, std::size_t granularity) {
    if (!(rate > 0.0 && rate < 1.0)) throw ConfigError("select_channels: rate must lie in (0, 1)");
    if (granularity == 0) throw ConfigError("select_channels: granularity must be positive");
    const std::size_t C = scores.size();
    if (C < granularity) {
        throw ConfigError("select_channels: layer has " + std::to_string(C) + " channels, fewer than granularity " +
                          std::to_string(granularity));
    }
    // The epsilon keeps products like 10 * 0.9 from ceiling up to the next integer.
    const auto raw_kept = static_cast<std::size_t>(std::ceil(static_cast<double>(C) * (1.0 - rate) - 1e-9));
    const std::size_t aligned = std::min(C, (raw_kept + granularity - 1) / granularity * granularity);

    ChannelSelection sel;
    sel.target_prune = C - aligned;
    std::vector<std::size_t> finite;
    for (std::size_t c = 0; c < C; ++c)
        if (std::isfinite(scores[c])) finite.push_back(c);
    std::stable_sort(finite.begin(), finite.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    const std::size_t n = std::min(sel.target_prune, finite.size());
    sel.shortfall = finite.size() < sel.target_prune;
    sel.pruned.assign(finite.begin(), finite.begin() + static_cast<std::ptrdiff_t>(n));
    std::sort(sel.pruned.begin(), sel.pruned.end());
    sel.kept_count = C - n;
    return sel;
}

std::size_t LayerPlan::unsafe_count() const {
    return static_cast<std::size_t>(std::count(safe.begin(), safe.end(), false));
}

std::vector<std::size_t> LayerPlan::kept_indices() const {
    std::vector<std::size_t> kept;
    std::size_t next = 0;
    for (std::size_t c = 0; c < original_channels; ++c) {
        if (next < pruned_indices.size() && pruned_indices[next] == c) {
            ++next;
            continue;
        }
        kept.push_back(c);
    }
    return kept;
}

const LayerPlan* PruningPlan::find(const std::string& layer_id) const {
    for (const auto& l : layers)
        if (l.layer_id == layer_id) return &l;
    return nullptr;
}

bool PruningPlan::empty() const {
    return std::all_of(layers.begin(), layers.end(), [](const LayerPlan& l) { return l.pruned_indices.empty(); });
}

namespace {

nlohmann::json scores_json(const std::vector<double>& scores) {
    nlohmann::json out = nlohmann::json::array();
    for (double s : scores) {
        if (std::isinf(s) && s > 0) {
            out.push_back("inf");
        } else {
            out.push_back(s);
        }
    }
    return out;
}

std::vector<double> parse_scores(const nlohmann::json& j) {
    std::vector<double> out;
    for (const auto& v : j) {
        if (v.is_string()) {
            if (v.get<std::string>() != "inf") throw ConfigError("plan: unexpected score literal");
            out.push_back(unsafe_score);
        } else {
            out.push_back(v.get<double>());
        }
    }
    return out;
}

nlohmann::json config_json(const PruningConfig& c) {
    return {{"theta_max", c.thresholds.max_importance},
            {"theta_avg", c.thresholds.avg_importance},
            {"theta_pen", c.thresholds.penalty},
            {"lambda", c.penalty_weight},
            {"rate", c.rate},
            {"granularity", c.granularity},
            {"use_conflict_penalty", c.use_conflict_penalty}};
}

}  // namespace

nlohmann::json PruningPlan::body_json() const {
    nlohmann::json layer_list = nlohmann::json::array();
    for (const auto& l : layers) {
        layer_list.push_back({{"layer", l.layer_id},
                              {"original_channels", l.original_channels},
                              {"scores", scores_json(l.scores)},
                              {"safe", l.safe},
                              {"unified", l.unified},
                              {"i_max", l.i_max},
                              {"i_avg", l.i_avg},
                              {"penalty", l.penalty},
                              {"pruned_indices", l.pruned_indices},
                              {"kept_count", l.kept_count},
                              {"target_prune", l.target_prune},
                              {"shortfall", l.shortfall}});
    }
    return {{"layers", layer_list}, {"config", config_json(config)}, {"provenance", provenance}};
}

nlohmann::json PruningPlan::to_json() const {
    auto j = body_json();
    j["plan_hash"] = plan_hash;
    return j;
}

void PruningPlan::seal() { plan_hash = sha256_hex(body_json().dump()); }

PruningPlan PruningPlan::from_json(const nlohmann::json& j) {
    try {
        PruningPlan p;
        const auto& c = j.at("config");
        p.config.thresholds = {c.at("theta_max").get<double>(), c.at("theta_avg").get<double>(),
                               c.at("theta_pen").get<double>()};
        p.config.penalty_weight = c.at("lambda").get<double>();
        p.config.rate = c.at("rate").get<double>();
        p.config.granularity = c.at("granularity").get<std::size_t>();
        p.config.use_conflict_penalty = c.at("use_conflict_penalty").get<bool>();
        p.provenance = j.at("provenance");
        for (const auto& lj : j.at("layers")) {
            LayerPlan l;
            l.layer_id = lj.at("layer").get<std::string>();
            l.original_channels = lj.at("original_channels").get<std::size_t>();
            l.scores = parse_scores(lj.at("scores"));
            l.safe = lj.at("safe").get<std::vector<bool>>();
            l.unified = lj.at("unified").get<std::vector<double>>();
            l.i_max = lj.at("i_max").get<std::vector<double>>();
            l.i_avg = lj.at("i_avg").get<std::vector<double>>();
            l.penalty = lj.at("penalty").get<std::vector<double>>();
            l.pruned_indices = lj.at("pruned_indices").get<std::vector<std::size_t>>();
            l.kept_count = lj.at("kept_count").get<std::size_t>();
            l.target_prune = lj.at("target_prune").get<std::size_t>();
            l.shortfall = lj.at("shortfall").get<bool>();
            p.layers.push_back(std::move(l));
        }
        p.plan_hash = j.at("plan_hash").get<std::string>();
        PruningPlan check = p;
        check.seal();
        if (check.plan_hash != p.plan_hash) throw ConfigError("plan: plan_hash does not match plan content");
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("plan: malformed JSON: ") + e.what());
    }
}

PruningPlan build_plan(std::span<const AggregatedImportance> importance, std::span<const ConflictReport> conflicts,
                       const PruningConfig& config) {
    PruningPlan plan;
    plan.config = config;
    for (const auto& agg : importance) {
        const std::size_t C = agg.unified.size();
        LayerPlan l;
        l.layer_id = agg.layer_id;
        l.original_channels = C;
        l.unified = agg.unified;
        l.i_max = agg.i_max;
        l.i_avg = agg.i_avg;
        l.penalty.assign(C, 0.0);
        if (config.use_conflict_penalty) {
            auto it = std::find_if(conflicts.begin(), conflicts.end(),
                                   [&](const ConflictReport& r) { return r.layer_id == agg.layer_id; });
            if (it == conflicts.end()) throw ConfigError("build_plan: no conflict report for '" + agg.layer_id + "'");
            if (it->penalty.size() != C) throw DimensionError("build_plan: penalty length mismatch for '" + agg.layer_id + "'");
            l.penalty = it->penalty;
        }
        l.scores.resize(C);
        l.safe.resize(C);
        for (std::size_t c = 0; c < C; ++c) {
            const bool safe = safe_gate(l.i_max[c], l.i_avg[c], l.penalty[c], config.thresholds);
            l.safe[c] = safe;
            l.scores[c] = pruning_score(l.unified[c], l.penalty[c], safe, config.penalty_weight);
        }
        const auto sel = select_channels(l.scores, config.rate, config.granularity);
        l.pruned_indices = sel.pruned;
        l.kept_count = sel.kept_count;
        l.target_prune = sel.target_prune;
        l.shortfall = sel.shortfall;
        plan.layers.push_back(std::move(l));
    }
    plan.seal();
    return plan;
}

namespace {

void check_plan_against(const ModelGraph& graph, const PruningPlan& plan) {
    std::set<std::string> seen;
    for (const auto& lp : plan.layers) {
        if (!graph.contains(lp.layer_id)) throw StructuralError("plan names unknown layer '" + lp.layer_id + "'");
        if (!seen.insert(lp.layer_id).second) throw StructuralError("plan lists layer '" + lp.layer_id + "' twice");
        const auto& spec = graph.layer(lp.layer_id);
        if (!spec.prunable) throw StructuralError("plan prunes non-prunable layer '" + lp.layer_id + "'");
        if (spec.out_channels != lp.original_channels) {
            throw StructuralError("plan for '" + lp.layer_id + "' assumes " + std::to_string(lp.original_channels) +
                                  " channels, graph has " + std::to_string(spec.out_channels));
        }
        for (std::size_t i = 0; i < lp.pruned_indices.size(); ++i) {
            if (lp.pruned_indices[i] >= lp.original_channels || (i && lp.pruned_indices[i] <= lp.pruned_indices[i - 1])) {
                throw StructuralError("plan for '" + lp.layer_id + "' has invalid channel indices");
            }
        }
        if (lp.pruned_indices.size() == lp.original_channels) {
            throw StructuralError("plan removes every channel of '" + lp.layer_id + "'");
        }
        if (lp.kept_count + lp.pruned_indices.size() != lp.original_channels) {
            throw StructuralError("plan for '" + lp.layer_id + "' has inconsistent kept_count");
        }
    }
}

std::vector<std::size_t> iota_n(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), 0);
    return v;
}

}  // namespace

std::map<std::string, std::vector<std::size_t>> surviving_channels(const ModelGraph& graph, const PruningPlan& plan) {
    std::map<std::string, std::vector<std::size_t>> out{{graph_input_id, iota_n(graph.input_channels())}};
    for (const auto& l : graph.layers()) {
        if (l.has_parameters()) {
            const LayerPlan* lp = plan.find(l.id);
            out[l.id] = lp ? lp->kept_indices() : iota_n(l.out_channels);
        } else {
            out[l.id] = out.at(l.input);
        }
    }
    return out;
}

Model apply_plan(const Model& model, const PruningPlan& plan) {
    const ModelGraph& graph = model.graph();
    check_plan_against(graph, plan);
    const auto channels = surviving_channels(graph, plan);

    std::set<std::string> outputs;
    for (const auto& [t, id] : graph.head_outputs()) outputs.insert(id);

    std::vector<LayerSpec> layers = graph.layers();
    ParameterMap params;
    for (auto& l : layers) {
        const auto& in_keep = channels.at(l.input);
        const auto& out_keep = channels.at(l.id);
        if (!l.has_parameters()) {
            if (out_keep.size() != l.out_channels && outputs.count(l.id)) {
                throw StructuralError("pruned channels reach head output '" + l.id + "' through '" + l.input +
                                      "' with no conv/linear consumer");
            }
            l.in_channels = in_keep.size();
            l.out_channels = out_keep.size();
            continue;
        }
        const Tensor& w = model.parameters().at(weight_name(l.id));
        const Tensor& b = model.parameters().at(bias_name(l.id));
        const std::size_t kk = l.kind == LayerKind::conv2d ? l.kernel * l.kernel : 1;
        const std::size_t old_in = l.in_channels;
        Shape wshape = w.shape();
        wshape[0] = out_keep.size();
        wshape[1] = in_keep.size();
        Tensor nw(wshape, w.requires_grad());
        Tensor nb({out_keep.size()}, b.requires_grad());
        const auto wd = w.data();
        auto nwd = nw.data();
        for (std::size_t o = 0; o < out_keep.size(); ++o) {
            for (std::size_t i = 0; i < in_keep.size(); ++i) {
                const double* src = wd.data() + (out_keep[o] * old_in + in_keep[i]) * kk;
                std::copy(src, src + kk, nwd.data() + (o * in_keep.size() + i) * kk);
            }
            nb.data()[o] = b.data()[out_keep[o]];
        }
        l.in_channels = in_keep.size();
        l.out_channels = out_keep.size();
        params.emplace(weight_name(l.id), nw);
        params.emplace(bias_name(l.id), nb);
    }
    return Model(ModelGraph(std::move(layers), graph.head_outputs(), graph.tap_points()), std::move(params));
}

std::size_t predicted_parameter_count(const ModelGraph& graph, const PruningPlan& plan) {
    std::map<std::string, std::size_t> width{{graph_input_id, graph.input_channels()}};
    std::size_t total = 0;
    for (const auto& l : graph.layers()) {
        const std::size_t in = width.at(l.input);
        if (!l.has_parameters()) {
            width[l.id] = in;
            continue;
        }
        const LayerPlan* lp = plan.find(l.id);
        const std::size_t out = lp ? lp->kept_count : l.out_channels;
        const std::size_t kk = l.kind == LayerKind::conv2d ? l.kernel * l.kernel : 1;
        total += out * in * kk + out;
        width[l.id] = out;
    }
    return total;
}

}  // namespace mtpd
