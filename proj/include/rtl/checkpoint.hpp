#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rtl/jsonutil.hpp"
#include "rtl/model.hpp"
#include "rtl/tensor_io.hpp"

// Checkpoint container: "RTLC" magic, format version, a JSON header
// (model config, tensor name -> byte range, provenance), then the named
// tensors concatenated in the binary tensor format.
namespace rtl {

inline ordered_json model_config_to_json(const ModelConfig& cfg) {
    ordered_json j;
    j["h"] = cfg.h;
    j["w"] = cfg.w;
    j["stage_widths"] = cfg.stage_widths;
    j["blocks_per_stage"] = cfg.blocks_per_stage;
    j["m"] = cfg.embed_dim();
    j["c"] = cfg.c;
    j["k"] = cfg.k;
    j["deconv_channels"] = cfg.deconv_channels;
    j["skip_connections"] = cfg.skip_connections;
    j["attention_source"] = cfg.attention_source;
    j["seed"] = cfg.seed;
    return j;
}

inline ModelConfig model_config_from_json(const ordered_json& j) {
    jsonutil::reject_unknown_keys(j,
                                  {"h", "w", "stage_widths", "blocks_per_stage", "m", "c", "k", "deconv_channels",
                                   "skip_connections", "attention_source", "seed"},
                                  "model config");
    ModelConfig cfg;
    cfg.h = jsonutil::get_size(j, "h", cfg.h);
    cfg.w = jsonutil::get_size(j, "w", cfg.w);
    cfg.stage_widths = jsonutil::get_size_array(j, "stage_widths", cfg.stage_widths);
    cfg.blocks_per_stage = jsonutil::get_size_array(j, "blocks_per_stage", cfg.blocks_per_stage);
    cfg.m = jsonutil::get_size(j, "m", 0);
    cfg.c = jsonutil::get_size(j, "c", cfg.c);
    cfg.k = jsonutil::get_size(j, "k", cfg.k);
    cfg.deconv_channels = jsonutil::get_size(j, "deconv_channels", cfg.deconv_channels);
    cfg.skip_connections = jsonutil::get_bool(j, "skip_connections", cfg.skip_connections);
    cfg.attention_source = jsonutil::get_size(j, "attention_source", cfg.attention_source);
    cfg.seed = jsonutil::get_u64(j, "seed", cfg.seed);
    cfg.validate();
    return cfg;
}

namespace detail {
inline constexpr char kCkptMagic[4] = {'R', 'T', 'L', 'C'};
inline constexpr std::uint8_t kCkptVersion = 1;
}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model, const ordered_json& provenance) {
    std::vector<std::pair<std::string, const Tensor<T>*>> entries;
    for (const auto& [name, p] : model.params()) entries.emplace_back(name, &p->value);
    for (const auto& [name, t] : model.buffers()) entries.emplace_back(name, t);

    std::string blobs;
    ordered_json table = ordered_json::object();
    for (const auto& [name, t] : entries) {
        std::ostringstream os;
        write_tensor(os, *t);
        const std::string blob = os.str();
        table[name] = {{"offset", blobs.size()}, {"bytes", blob.size()}};
        blobs += blob;
    }

    ordered_json header;
    header["config"] = model_config_to_json(model.config());
    header["tensors"] = std::move(table);
    header["provenance"] = provenance;
    const std::string header_str = header.dump();

    std::ofstream os(path, std::ios::binary);
    require(os.good(), ErrorKind::data, "cannot write checkpoint '" + path + "'");
    os.write(detail::kCkptMagic, 4);
    os.put(static_cast<char>(detail::kCkptVersion));
    std::uint64_t len = header_str.size();
    char lenb[8];
    for (int i = 0; i < 8; ++i) lenb[i] = static_cast<char>((len >> (8 * i)) & 0xff);
    os.write(lenb, 8);
    os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    os.write(blobs.data(), static_cast<std::streamsize>(blobs.size()));
    require(os.good(), ErrorKind::data, "write failed for checkpoint '" + path + "'");
}

struct CheckpointHeader {
    ModelConfig config;
    ordered_json provenance;
};

// Rebuilds the model from the stored config, then overwrites every
// parameter and buffer from the stored tensors (all must be present with
// matching shapes).
template <typename T>
Model<T> load_checkpoint(const std::string& path, CheckpointHeader* out_header = nullptr) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), ErrorKind::data, "cannot open checkpoint '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    require(is.good() && std::equal(magic, magic + 4, detail::kCkptMagic), ErrorKind::data,
            "'" + path + "' is not a checkpoint file");
    const int version = is.get();
    require(version == detail::kCkptVersion, ErrorKind::data,
            "unsupported checkpoint version " + std::to_string(version));
    char lenb[8];
    is.read(lenb, 8);
    require(is.good(), ErrorKind::data, "truncated checkpoint header");
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(static_cast<unsigned char>(lenb[i])) << (8 * i);
    std::string header_str(len, '\0');
    is.read(header_str.data(), static_cast<std::streamsize>(len));
    require(is.good(), ErrorKind::data, "truncated checkpoint header");

    ordered_json header;
    try {
        header = ordered_json::parse(header_str);
    } catch (const std::exception& e) {
        throw_data(std::string("malformed checkpoint header: ") + e.what());
    }
    require(header.contains("config") && header.contains("tensors"), ErrorKind::data,
            "checkpoint header missing config or tensor table");
    const ModelConfig cfg = model_config_from_json(header["config"]);
    auto model = Model<T>::build(cfg);

    const std::streampos blob_base = is.tellg();
    auto load_into = [&](const std::string& name, Tensor<T>& dst) {
        require(header["tensors"].contains(name), ErrorKind::data, "checkpoint missing tensor '" + name + "'");
        const auto& e = header["tensors"][name];
        is.seekg(blob_base + static_cast<std::streamoff>(jsonutil::get_u64(e, "offset", 0)));
        Tensor<T> t = read_tensor<T>(is);
        require(t.same_shape(dst), ErrorKind::data,
                "checkpoint tensor '" + name + "' has shape " + dims_str(t.shape()) + ", expected " +
                    dims_str(dst.shape()));
        dst = std::move(t);
    };
    for (const auto& [name, p] : model.params()) load_into(name, p->value);
    for (const auto& [name, t] : model.buffers()) load_into(name, *t);

    if (out_header) {
        out_header->config = cfg;
        out_header->provenance = header.contains("provenance") ? header["provenance"] : ordered_json::object();
    }
    return model;
}

}  // namespace rtl
