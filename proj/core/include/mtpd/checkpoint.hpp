#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "mtpd/model.hpp"

namespace mtpd {

inline constexpr char checkpoint_magic[4] = {'M', 'T', 'P', 'D'};
inline constexpr std::uint32_t checkpoint_format_version = 1;

struct CheckpointMetadata {
    std::uint64_t step = 0;
    std::uint64_t seed = 0;
    std::string plan_hash;  // empty for unpruned models
    nlohmann::json extra = nlohmann::json::object();

    bool operator==(const CheckpointMetadata&) const = default;
};

struct Checkpoint {
    Model model;
    CheckpointMetadata metadata;
};

/// Layout: "MTPD", u32 format version, u64 header length, JSON header (graph,
/// metadata, tensor index), then every parameter as little-endian fp32 in index
/// order. Parameters are rounded to fp32 on the way out.
std::string serialize_checkpoint(const Model& model, const CheckpointMetadata& metadata);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Model& model, const CheckpointMetadata& metadata);
/// Throws DependencyError when the file is missing and ConfigError when it is malformed.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mtpd
