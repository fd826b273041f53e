#pragma once

#include <cstddef>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "mtpd/task.hpp"

namespace mtpd {

enum class LayerKind { conv2d, relu, maxpool2x2, bilinear_upsample, linear, global_avg_pool };
enum class LayerRole { backbone, encoder, head };

std::string_view layer_kind_name(LayerKind k);
LayerKind parse_layer_kind(std::string_view name);

inline constexpr const char* graph_input_id = "input";

struct LayerSpec {
    std::string id;
    LayerKind kind = LayerKind::relu;
    std::string input = graph_input_id;  // producer layer id
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t scale = 1;  // bilinear_upsample factor
    bool prunable = false;
    LayerRole role = LayerRole::backbone;
    std::optional<Task> task;  // set for head layers

    bool has_parameters() const { return kind == LayerKind::conv2d || kind == LayerKind::linear; }
    /// weight element count plus bias element count; zero for parameter-free kinds.
    std::size_t parameter_count() const;

    bool operator==(const LayerSpec&) const = default;
};

/// Knobs for the reference three-task network.
struct ArchitectureConfig {
    std::size_t image_size = 64;
    std::vector<std::size_t> backbone_channels{16, 32, 64};
    std::size_t encoder_channels = 64;
    std::size_t head_channels = 16;
};

/// Layered description of a shared-trunk multi-task network: a backbone of strided
/// convs, an encoder, and three heads that each read the encoder output.
class ModelGraph {
public:
    ModelGraph() = default;
    ModelGraph(std::vector<LayerSpec> layers, std::map<Task, std::string> head_outputs,
               std::vector<std::string> tap_points);

    static ModelGraph reference(const ArchitectureConfig& arch = {});

    const std::vector<LayerSpec>& layers() const { return layers_; }
    const LayerSpec& layer(const std::string& id) const;
    LayerSpec& mutable_layer(const std::string& id);
    bool contains(const std::string& id) const;

    const std::map<Task, std::string>& head_outputs() const { return head_outputs_; }
    const std::vector<std::string>& tap_points() const { return tap_points_; }
    bool is_tap_point(const std::string& id) const;

    std::vector<std::string> consumers(const std::string& id) const;
    std::vector<std::string> prunable_layers() const;
    /// The tensor a prunable conv hands to the rest of the network: its ReLU when
    /// it is followed by one, otherwise the conv output itself.
    std::string feature_point(const std::string& conv_id) const;

    /// Output spatial size of every layer for a square input of the given size.
    std::map<std::string, std::size_t> spatial_sizes(std::size_t input_size) const;

    /// Sum over conv/linear layers of out*in*k*k + out.
    std::size_t parameter_count() const;
    std::size_t input_channels() const { return input_channels_; }

    /// Throws StructuralError when the graph is inconsistent.
    void validate() const;

    nlohmann::json to_json() const;
    static ModelGraph from_json(const nlohmann::json& j);

    bool operator==(const ModelGraph&) const = default;

private:
    std::vector<LayerSpec> layers_;
    std::map<Task, std::string> head_outputs_;
    std::vector<std::string> tap_points_;
    std::size_t input_channels_ = 3;
};

}  // namespace mtpd
