#include "mtpd/model.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "mtpd/error.hpp"
#include "mtpd/ops.hpp"

namespace mtpd {

std::string weight_name(const std::string& layer_id) { return layer_id + ".weight"; }
std::string bias_name(const std::string& layer_id) { return layer_id + ".bias"; }

namespace {

const Tensor& param(const ParameterMap& params, const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw StructuralError("missing parameter '" + name + "'");
    return it->second;
}

Shape weight_shape(const LayerSpec& l) {
    if (l.kind == LayerKind::conv2d) return {l.out_channels, l.in_channels, l.kernel, l.kernel};
    return {l.out_channels, l.in_channels};
}

}  // namespace

Tensor forward_layer(const LayerSpec& layer, const ParameterMap& params, const Tensor& input) {
    const bool spatial = layer.kind != LayerKind::linear;
    if ((spatial && input.rank() != 4) || (!spatial && input.rank() != 2)) {
        throw DimensionError("layer '" + layer.id + "': unexpected input shape " + shape_str(input.shape()));
    }
    if (input.dim(1) != layer.in_channels) {
        throw DimensionError("layer '" + layer.id + "': expects " + std::to_string(layer.in_channels) +
                             " input channels, got " + std::to_string(input.dim(1)));
    }
    try {
        switch (layer.kind) {
            case LayerKind::conv2d:
                return ops::conv2d(input, param(params, weight_name(layer.id)), param(params, bias_name(layer.id)),
                                   layer.stride, layer.padding);
            case LayerKind::linear:
                return ops::linear(input, param(params, weight_name(layer.id)), param(params, bias_name(layer.id)));
            case LayerKind::relu: return ops::relu(input);
            case LayerKind::maxpool2x2: return ops::maxpool2x2(input);
            case LayerKind::bilinear_upsample: return ops::upsample_bilinear(input, layer.scale);
            case LayerKind::global_avg_pool: return ops::global_avg_pool(input);
        }
    } catch (const DimensionError& e) {
        throw DimensionError("layer '" + layer.id + "': " + e.what());
    }
    throw Error("unreachable layer kind");
}

const Tensor& Predictions::operator[](Task t) const {
    switch (t) {
        case Task::det: return det;
        case Task::da: return da;
        case Task::lane: return lane;
    }
    return det;
}

Model::Model(ModelGraph graph, ParameterMap params) : graph_(std::move(graph)), params_(std::move(params)) {
    check_parameters();
}

Model Model::initialize(ModelGraph graph, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ParameterMap params;
    for (const auto& l : graph.layers()) {
        if (!l.has_parameters()) continue;
        Tensor w(weight_shape(l), true);
        const std::size_t fan_in = l.in_channels * (l.kind == LayerKind::conv2d ? l.kernel * l.kernel : 1);
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
        for (double& v : w.data()) v = dist(rng);
        w.round_to_float();
        params.emplace(weight_name(l.id), w);
        params.emplace(bias_name(l.id), Tensor({l.out_channels}, true));
    }
    return Model(std::move(graph), std::move(params));
}

void Model::check_parameters() const {
    std::size_t expected = 0;
    for (const auto& l : graph_.layers()) {
        if (!l.has_parameters()) continue;
        expected += 2;
        const auto& w = param(params_, weight_name(l.id));
        const auto& b = param(params_, bias_name(l.id));
        if (w.shape() != weight_shape(l) || b.shape() != Shape{l.out_channels}) {
            throw StructuralError("parameters of layer '" + l.id + "' do not match the graph: weight " +
                                  shape_str(w.shape()) + ", bias " + shape_str(b.shape()));
        }
    }
    if (expected != params_.size()) throw StructuralError("parameter set has entries for layers not in the graph");
}

std::vector<Tensor> Model::parameter_list() const {
    std::vector<Tensor> out;
    out.reserve(params_.size());
    for (const auto& [_, t] : params_) out.push_back(t);
    return out;
}

void Model::set_requires_grad(bool value) {
    for (auto& [_, t] : params_) t.set_requires_grad(value);
}

void Model::zero_grad() {
    for (auto& [_, t] : params_) t.zero_grad();
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : params_) n += t.numel();
    return n;
}

ForwardResult Model::forward(const Tensor& images, std::span<const std::string> taps) const {
    for (const auto& tap : taps) {
        if (!graph_.is_tap_point(tap)) throw ConfigError("unknown tap id '" + tap + "'");
    }
    if (images.rank() != 4 || images.dim(1) != graph_.input_channels()) {
        throw DimensionError("model input must be [B, " + std::to_string(graph_.input_channels()) +
                             ", H, W], got " + shape_str(images.shape()));
    }
    std::map<std::string, Tensor> values{{graph_input_id, images}};
    for (const auto& l : graph_.layers()) values.emplace(l.id, forward_layer(l, params_, values.at(l.input)));

    ForwardResult r;
    r.predictions.det = values.at(graph_.head_outputs().at(Task::det));
    r.predictions.da = values.at(graph_.head_outputs().at(Task::da));
    r.predictions.lane = values.at(graph_.head_outputs().at(Task::lane));
    for (const auto& tap : taps) r.taps.emplace(tap, values.at(tap));
    return r;
}

Model Model::clone() const {
    ParameterMap params;
    for (const auto& [name, t] : params_) params.emplace(name, t.clone());
    return Model(graph_, std::move(params));
}

std::uint64_t Model::checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [name, t] : params_) {
        mix(name.data(), name.size());
        for (auto d : t.shape()) mix(&d, sizeof d);
        mix(t.data().data(), t.numel() * sizeof(double));
    }
    return h;
}

}  // namespace mtpd
