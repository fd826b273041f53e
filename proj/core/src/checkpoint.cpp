#include "mtpd/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "mtpd/digest.hpp"
#include "mtpd/error.hpp"

namespace mtpd {

namespace {

template <typename U>
void put_le(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const std::string& in, std::size_t at) {
    if (at + sizeof(U) > in.size()) throw ConfigError("checkpoint: truncated file");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    return v;
}

nlohmann::json metadata_json(const CheckpointMetadata& m) {
    return {{"step", m.step}, {"seed", m.seed}, {"plan_hash", m.plan_hash}, {"extra", m.extra}};
}

}  // namespace

std::string serialize_checkpoint(const Model& model, const CheckpointMetadata& metadata) {
    nlohmann::json index = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& [name, t] : model.parameters()) {
        index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"count", t.numel()}});
        offset += t.numel();
    }
    const nlohmann::json header{{"graph", model.graph().to_json()}, {"metadata", metadata_json(metadata)}, {"tensors", index}};
    const std::string header_text = header.dump();

    std::string out(checkpoint_magic, sizeof checkpoint_magic);
    put_le<std::uint32_t>(out, checkpoint_format_version);
    put_le<std::uint64_t>(out, header_text.size());
    out += header_text;
    out.reserve(out.size() + 4 * offset);
    for (const auto& [_, t] : model.parameters()) {
        for (double v : t.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), checkpoint_magic, 4) != 0) {
        throw ConfigError("checkpoint: bad magic bytes");
    }
    const auto version = get_le<std::uint32_t>(bytes, 4);
    if (version != checkpoint_format_version) {
        throw ConfigError("checkpoint: unsupported format version " + std::to_string(version));
    }
    const auto header_len = get_le<std::uint64_t>(bytes, 8);
    if (16 + header_len > bytes.size()) throw ConfigError("checkpoint: truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(16, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("checkpoint: malformed header: ") + e.what());
    }
    const std::size_t payload = 16 + header_len;
    try {
        ModelGraph graph = ModelGraph::from_json(header.at("graph"));
        ParameterMap params;
        for (const auto& entry : header.at("tensors")) {
            const Shape shape = entry.at("shape").get<Shape>();
            const auto offset = entry.at("offset").get<std::size_t>();
            const auto count = entry.at("count").get<std::size_t>();
            if (shape_numel(shape) != count) throw ConfigError("checkpoint: tensor count disagrees with shape");
            if (payload + 4 * (offset + count) > bytes.size()) throw ConfigError("checkpoint: truncated payload");
            std::vector<double> data(count);
            for (std::size_t i = 0; i < count; ++i) {
                data[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, payload + 4 * (offset + i)));
            }
            params.emplace(entry.at("name").get<std::string>(), Tensor(shape, std::move(data), true));
        }
        const auto& m = header.at("metadata");
        CheckpointMetadata meta{m.at("step").get<std::uint64_t>(), m.at("seed").get<std::uint64_t>(),
                                m.at("plan_hash").get<std::string>(), m.at("extra")};
        return {Model(std::move(graph), std::move(params)), std::move(meta)};
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("checkpoint: malformed header: ") + e.what());
    } catch (const StructuralError& e) {
        throw ConfigError(std::string("checkpoint: ") + e.what());
    }
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const CheckpointMetadata& metadata) {
    write_file(path, serialize_checkpoint(model, metadata));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw DependencyError("checkpoint '" + path.string() + "' does not exist");
    return deserialize_checkpoint(read_file(path));
}

}  // namespace mtpd
