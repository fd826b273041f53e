#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mtpd/model_graph.hpp"
#include "mtpd/tensor.hpp"

namespace mtpd {

/// Parameter tensors keyed "<layer id>.weight" / "<layer id>.bias".
using ParameterMap = std::map<std::string, Tensor>;

std::string weight_name(const std::string& layer_id);
std::string bias_name(const std::string& layer_id);

/// Applies one layer. Throws DimensionError naming the layer on a channel mismatch.
Tensor forward_layer(const LayerSpec& layer, const ParameterMap& params, const Tensor& input);

struct Predictions {
    Tensor det;   // [B, 6]: box (cx, cy, w, h) then two class logits
    Tensor da;    // [B, 1, H, W] logits
    Tensor lane;  // [B, 1, H, W] logits

    const Tensor& operator[](Task t) const;
};

struct ForwardResult {
    Predictions predictions;
    std::map<std::string, Tensor> taps;
};

class Model {
public:
    Model() = default;
    Model(ModelGraph graph, ParameterMap params);

    /// He-normal weights, zero biases, drawn from a generator seeded with `seed`.
    static Model initialize(ModelGraph graph, std::uint64_t seed);

    const ModelGraph& graph() const { return graph_; }
    const ParameterMap& parameters() const { return params_; }
    ParameterMap& mutable_parameters() { return params_; }
    std::vector<Tensor> parameter_list() const;

    void set_requires_grad(bool value);
    void zero_grad();
    std::size_t parameter_count() const;

    /// Single pass over the graph; every requested tap is captured on the way.
    /// Unknown tap ids raise ConfigError.
    ForwardResult forward(const Tensor& images, std::span<const std::string> taps = {}) const;

    /// Deep copy of graph and parameters, detached from any tape.
    Model clone() const;

    /// FNV-1a over parameter names, shapes and values.
    std::uint64_t checksum() const;

private:
    void check_parameters() const;

    ModelGraph graph_;
    ParameterMap params_;
};

}  // namespace mtpd
