#include "mtpd/model_graph.hpp"

#include <algorithm>
#include <set>

#include "mtpd/error.hpp"

namespace mtpd {

namespace {

constexpr std::pair<LayerKind, const char*> kind_names[] = {
    {LayerKind::conv2d, "conv2d"},
    {LayerKind::relu, "relu"},
    {LayerKind::maxpool2x2, "maxpool2x2"},
    {LayerKind::bilinear_upsample, "bilinear_upsample"},
    {LayerKind::linear, "linear"},
    {LayerKind::global_avg_pool, "global_avg_pool"},
};

constexpr std::pair<LayerRole, const char*> role_names[] = {
    {LayerRole::backbone, "backbone"},
    {LayerRole::encoder, "encoder"},
    {LayerRole::head, "head"},
};

bool channel_preserving(LayerKind k) {
    return k == LayerKind::relu || k == LayerKind::maxpool2x2 || k == LayerKind::bilinear_upsample ||
           k == LayerKind::global_avg_pool;
}

LayerSpec conv(std::string id, std::string input, std::size_t in, std::size_t out, std::size_t k,
               std::size_t stride, LayerRole role, std::optional<Task> task = std::nullopt) {
    LayerSpec s;
    s.id = std::move(id);
    s.kind = LayerKind::conv2d;
    s.input = std::move(input);
    s.in_channels = in;
    s.out_channels = out;
    s.kernel = k;
    s.stride = stride;
    s.padding = k / 2;
    s.role = role;
    s.task = task;
    s.prunable = role == LayerRole::backbone;
    return s;
}

LayerSpec passthrough(std::string id, LayerKind kind, std::string input, std::size_t channels, LayerRole role,
                      std::optional<Task> task = std::nullopt, std::size_t scale = 1) {
    LayerSpec s;
    s.id = std::move(id);
    s.kind = kind;
    s.input = std::move(input);
    s.in_channels = channels;
    s.out_channels = channels;
    s.role = role;
    s.task = task;
    s.scale = scale;
    return s;
}

}  // namespace

std::string_view layer_kind_name(LayerKind k) {
    for (auto [kind, name] : kind_names)
        if (kind == k) return name;
    return "?";
}

LayerKind parse_layer_kind(std::string_view name) {
    for (auto [kind, n] : kind_names)
        if (n == name) return kind;
    throw ConfigError("unknown layer kind '" + std::string(name) + "'");
}

std::size_t LayerSpec::parameter_count() const {
    switch (kind) {
        case LayerKind::conv2d: return out_channels * in_channels * kernel * kernel + out_channels;
        case LayerKind::linear: return out_channels * in_channels + out_channels;
        default: return 0;
    }
}

ModelGraph::ModelGraph(std::vector<LayerSpec> layers, std::map<Task, std::string> head_outputs,
                       std::vector<std::string> tap_points)
    : layers_(std::move(layers)), head_outputs_(std::move(head_outputs)), tap_points_(std::move(tap_points)) {
    validate();
}

ModelGraph ModelGraph::reference(const ArchitectureConfig& arch) {
    if (arch.backbone_channels.empty()) throw ConfigError("model: backbone needs at least one stage");
    const std::size_t stages = arch.backbone_channels.size();
    if (arch.image_size % (std::size_t{1} << stages) != 0) {
        throw ConfigError("model: image_size must be divisible by 2^(backbone stages)");
    }
    std::vector<LayerSpec> layers;
    std::vector<std::string> taps;
    std::string prev = graph_input_id;
    std::size_t channels = 3;
    for (std::size_t i = 0; i < stages; ++i) {
        const std::string id = "b" + std::to_string(i + 1);
        layers.push_back(conv(id, prev, channels, arch.backbone_channels[i], 3, 2, LayerRole::backbone));
        layers.push_back(passthrough(id + "_relu", LayerKind::relu, id, arch.backbone_channels[i], LayerRole::backbone));
        taps.push_back(id);
        taps.push_back(id + "_relu");
        prev = id + "_relu";
        channels = arch.backbone_channels[i];
    }
    layers.push_back(conv("enc", prev, channels, arch.encoder_channels, 3, 1, LayerRole::encoder));
    layers.push_back(passthrough("enc_relu", LayerKind::relu, "enc", arch.encoder_channels, LayerRole::encoder));
    taps.push_back("enc");
    taps.push_back("enc_relu");
    const std::string trunk = "enc_relu";

    layers.push_back(passthrough("det_pool", LayerKind::global_avg_pool, trunk, arch.encoder_channels,
                                 LayerRole::head, Task::det));
    LayerSpec fc;
    fc.id = "det_fc";
    fc.kind = LayerKind::linear;
    fc.input = "det_pool";
    fc.in_channels = arch.encoder_channels;
    fc.out_channels = 6;  // box (cx, cy, w, h) + two class logits
    fc.role = LayerRole::head;
    fc.task = Task::det;
    layers.push_back(fc);

    std::map<Task, std::string> heads{{Task::det, "det_fc"}};
    for (Task t : {Task::da, Task::lane}) {
        const std::string p(task_name(t));
        layers.push_back(conv(p + "_conv", trunk, arch.encoder_channels, arch.head_channels, 3, 1, LayerRole::head, t));
        layers.push_back(passthrough(p + "_relu", LayerKind::relu, p + "_conv", arch.head_channels, LayerRole::head, t));
        std::string up_prev = p + "_relu";
        for (std::size_t i = 0; i < stages; ++i) {
            const std::string id = p + "_up" + std::to_string(i + 1);
            layers.push_back(passthrough(id, LayerKind::bilinear_upsample, up_prev, arch.head_channels,
                                         LayerRole::head, t, 2));
            up_prev = id;
        }
        layers.push_back(conv(p + "_out", up_prev, arch.head_channels, 1, 1, 1, LayerRole::head, t));
        heads[t] = p + "_out";
    }
    return ModelGraph(std::move(layers), std::move(heads), std::move(taps));
}

const LayerSpec& ModelGraph::layer(const std::string& id) const {
    for (const auto& l : layers_)
        if (l.id == id) return l;
    throw ConfigError("unknown layer id '" + id + "'");
}

LayerSpec& ModelGraph::mutable_layer(const std::string& id) {
    for (auto& l : layers_)
        if (l.id == id) return l;
    throw ConfigError("unknown layer id '" + id + "'");
}

bool ModelGraph::contains(const std::string& id) const {
    return std::any_of(layers_.begin(), layers_.end(), [&](const LayerSpec& l) { return l.id == id; });
}

bool ModelGraph::is_tap_point(const std::string& id) const {
    return std::find(tap_points_.begin(), tap_points_.end(), id) != tap_points_.end();
}

std::vector<std::string> ModelGraph::consumers(const std::string& id) const {
    std::vector<std::string> out;
    for (const auto& l : layers_)
        if (l.input == id) out.push_back(l.id);
    return out;
}

std::vector<std::string> ModelGraph::prunable_layers() const {
    std::vector<std::string> out;
    for (const auto& l : layers_)
        if (l.prunable) out.push_back(l.id);
    return out;
}

std::string ModelGraph::feature_point(const std::string& conv_id) const {
    const auto next = consumers(conv_id);
    if (next.size() == 1 && layer(next[0]).kind == LayerKind::relu) return next[0];
    return conv_id;
}

std::map<std::string, std::size_t> ModelGraph::spatial_sizes(std::size_t input_size) const {
    std::map<std::string, std::size_t> size{{graph_input_id, input_size}};
    for (const auto& l : layers_) {
        const std::size_t in = size.at(l.input);
        switch (l.kind) {
            case LayerKind::conv2d:
                size[l.id] = (in + 2 * l.padding - l.kernel) / l.stride + 1;
                break;
            case LayerKind::maxpool2x2: size[l.id] = in / 2; break;
            case LayerKind::bilinear_upsample: size[l.id] = in * l.scale; break;
            case LayerKind::global_avg_pool:
            case LayerKind::linear: size[l.id] = 1; break;
            case LayerKind::relu: size[l.id] = in; break;
        }
    }
    return size;
}

std::size_t ModelGraph::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.parameter_count();
    return n;
}

void ModelGraph::validate() const {
    std::map<std::string, const LayerSpec*> seen;
    for (const auto& l : layers_) {
        if (l.id.empty() || l.id == graph_input_id) throw StructuralError("graph: invalid layer id '" + l.id + "'");
        if (seen.count(l.id)) throw StructuralError("graph: duplicate layer id '" + l.id + "'");
        std::size_t producer_channels = input_channels_;
        LayerKind producer_kind = LayerKind::conv2d;
        if (l.input != graph_input_id) {
            auto it = seen.find(l.input);
            if (it == seen.end()) {
                throw StructuralError("graph: layer '" + l.id + "' reads '" + l.input +
                                      "' which is not an earlier layer");
            }
            producer_channels = it->second->out_channels;
            producer_kind = it->second->kind;
        }
        if (l.in_channels != producer_channels) {
            throw StructuralError("graph: layer '" + l.id + "' expects " + std::to_string(l.in_channels) +
                                  " channels but '" + l.input + "' produces " + std::to_string(producer_channels));
        }
        if (channel_preserving(l.kind) && l.in_channels != l.out_channels) {
            throw StructuralError("graph: layer '" + l.id + "' must preserve its channel count");
        }
        if (l.kind == LayerKind::linear && producer_kind != LayerKind::global_avg_pool && l.input != graph_input_id &&
            producer_kind != LayerKind::linear) {
            throw StructuralError("graph: linear layer '" + l.id + "' must follow a pooling or linear layer");
        }
        if (l.kind == LayerKind::conv2d && (l.kernel == 0 || l.stride == 0)) {
            throw StructuralError("graph: conv layer '" + l.id + "' has zero kernel or stride");
        }
        if (l.prunable && (l.kind != LayerKind::conv2d || l.role != LayerRole::backbone)) {
            throw StructuralError("graph: only backbone conv layers may be prunable, not '" + l.id + "'");
        }
        if (l.role == LayerRole::head && !l.task) throw StructuralError("graph: head layer '" + l.id + "' has no task");
        seen[l.id] = &l;
    }
    for (Task t : all_tasks) {
        auto it = head_outputs_.find(t);
        if (it == head_outputs_.end() || !seen.count(it->second)) {
            throw StructuralError("graph: missing head output for task " + std::string(task_name(t)));
        }
    }
    for (const auto& tap : tap_points_) {
        if (!seen.count(tap)) throw StructuralError("graph: tap point '" + tap + "' names no layer");
    }
}

nlohmann::json ModelGraph::to_json() const {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : layers_) {
        nlohmann::json j{{"id", l.id},
                         {"kind", layer_kind_name(l.kind)},
                         {"input", l.input},
                         {"in_channels", l.in_channels},
                         {"out_channels", l.out_channels},
                         {"kernel", l.kernel},
                         {"stride", l.stride},
                         {"padding", l.padding},
                         {"scale", l.scale},
                         {"prunable", l.prunable}};
        for (auto [role, name] : role_names)
            if (role == l.role) j["role"] = name;
        if (l.task) j["task"] = task_name(*l.task);
        layers.push_back(std::move(j));
    }
    nlohmann::json heads = nlohmann::json::object();
    for (const auto& [t, id] : head_outputs_) heads[std::string(task_name(t))] = id;
    return {{"layers", layers}, {"heads", heads}, {"tap_points", tap_points_}, {"input_channels", input_channels_}};
}

ModelGraph ModelGraph::from_json(const nlohmann::json& j) {
    try {
        std::vector<LayerSpec> layers;
        for (const auto& lj : j.at("layers")) {
            LayerSpec l;
            l.id = lj.at("id").get<std::string>();
            l.kind = parse_layer_kind(lj.at("kind").get<std::string>());
            l.input = lj.at("input").get<std::string>();
            l.in_channels = lj.at("in_channels").get<std::size_t>();
            l.out_channels = lj.at("out_channels").get<std::size_t>();
            l.kernel = lj.at("kernel").get<std::size_t>();
            l.stride = lj.at("stride").get<std::size_t>();
            l.padding = lj.at("padding").get<std::size_t>();
            l.scale = lj.at("scale").get<std::size_t>();
            l.prunable = lj.at("prunable").get<bool>();
            const auto role = lj.at("role").get<std::string>();
            bool found = false;
            for (auto [r, name] : role_names) {
                if (role == name) {
                    l.role = r;
                    found = true;
                }
            }
            if (!found) throw ConfigError("graph: unknown role '" + role + "'");
            if (lj.contains("task")) l.task = parse_task(lj.at("task").get<std::string>());
            layers.push_back(std::move(l));
        }
        std::map<Task, std::string> heads;
        for (const auto& [name, id] : j.at("heads").items()) heads[parse_task(name)] = id.get<std::string>();
        ModelGraph g;
        g.layers_ = std::move(layers);
        g.head_outputs_ = std::move(heads);
        g.tap_points_ = j.at("tap_points").get<std::vector<std::string>>();
        g.input_channels_ = j.at("input_channels").get<std::size_t>();
        g.validate();
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("graph: malformed JSON: ") + e.what());
    }
}

}  // namespace mtpd
