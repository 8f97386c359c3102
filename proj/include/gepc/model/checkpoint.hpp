#pragma once

// Checkpoint container:
//
//   bytes 0..7    magic "GEPCCKPT"
//   bytes 8..11   format version, uint32 little-endian
//   bytes 12..19  manifest length L, uint64 little-endian
//   next L bytes  JSON manifest (UTF-8)
//   rest          tensor payloads, float64 little-endian, in manifest order
//
// The manifest holds the model config, a tensor index (name, kind, shape,
// element offset into the payload) and free-form provenance.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "gepc/model/stgcae.hpp"
#include "gepc/score/dirichlet.hpp"

namespace gepc {

inline constexpr char kCheckpointMagic[8] = {'G', 'E', 'P', 'C', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::unique_ptr<Stgcae> model;
    std::optional<DirichletMixture> mixture;
    json provenance;
};

namespace detail {

template <class U>
void put_le(std::ostream& out, U v) {
    std::array<char, sizeof(U)> b;
    for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b.data(), b.size());
}

template <class U>
U get_le(std::istream& in) {
    std::array<unsigned char, sizeof(U)> b;
    if (!in.read(reinterpret_cast<char*>(b.data()), b.size())) throw SchemaError("checkpoint: truncated file");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
    return v;
}

struct TensorRef {
    std::string name;
    std::string kind;
    Tensor* tensor;
};

}  // namespace detail

inline void save_checkpoint(std::ostream& out, Stgcae& model, const DirichletMixture* mixture = nullptr,
                            const json& provenance = json::object()) {
    std::vector<detail::TensorRef> refs;
    for (auto& p : model.all_parameters()) refs.push_back({p.name, "parameter", &p.param->value()});
    for (auto& b : model.buffers()) refs.push_back({b.name, "buffer", b.tensor});
    Tensor mix_w, mix_a;
    if (mixture && mixture->fitted()) {
        const std::size_t m = mixture->components(), k = mixture->dims();
        mix_w = Tensor({m}, mixture->weights);
        mix_a = Tensor({m, k});
        for (std::size_t c = 0; c < m; ++c) std::copy(mixture->alpha[c].begin(), mixture->alpha[c].end(), mix_a.data() + c * k);
        refs.push_back({"mixture.weights", "mixture", &mix_w});
        refs.push_back({"mixture.alpha", "mixture", &mix_a});
    }
    json index = json::array();
    std::size_t offset = 0;
    for (const auto& r : refs) {
        index.push_back({{"name", r.name}, {"kind", r.kind}, {"shape", r.tensor->shape()}, {"offset", offset}});
        offset += r.tensor->size();
    }
    json manifest{{"config", to_json(model.config())},
                  {"cluster_initialized", model.cluster.initialized},
                  {"tensors", std::move(index)},
                  {"payload_values", offset},
                  {"provenance", provenance}};
    const std::string text = manifest.dump();
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::put_le<std::uint32_t>(out, kCheckpointVersion);
    detail::put_le<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& r : refs)
        for (real v : r.tensor->vec()) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(static_cast<double>(v)));
    if (!out) throw Error("checkpoint: write failed");
}

inline void save_checkpoint(const std::string& path, Stgcae& model, const DirichletMixture* mixture = nullptr,
                            const json& provenance = json::object()) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint '" + path + "'");
    save_checkpoint(out, model, mixture, provenance);
}

inline Checkpoint load_checkpoint(std::istream& in) {
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw SchemaError("checkpoint: bad magic");
    const auto version = detail::get_le<std::uint32_t>(in);
    if (version != kCheckpointVersion)
        throw SchemaError("checkpoint: unsupported format version " + std::to_string(version));
    const auto len = detail::get_le<std::uint64_t>(in);
    std::string text(len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw SchemaError("checkpoint: truncated manifest");
    json manifest;
    try {
        manifest = json::parse(text);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("checkpoint: invalid manifest: ") + e.what());
    }

    Checkpoint ck;
    try {
        ck.model = std::make_unique<Stgcae>(model_config_from_json(manifest.at("config")));
        ck.model->cluster.initialized = manifest.at("cluster_initialized").get<bool>();
        ck.provenance = manifest.value("provenance", json::object());

        std::map<std::string, Tensor*> slots;
        for (auto& p : ck.model->all_parameters()) slots[p.name] = &p.param->value();
        for (auto& b : ck.model->buffers()) slots[b.name] = b.tensor;
        const std::size_t expected = slots.size();
        std::size_t filled = 0;
        Tensor mix_w, mix_a;
        const std::size_t total = manifest.at("payload_values").get<std::size_t>();
        std::vector<double> payload(total);
        for (auto& v : payload) v = std::bit_cast<double>(detail::get_le<std::uint64_t>(in));

        for (const auto& entry : manifest.at("tensors")) {
            const auto name = entry.at("name").get<std::string>();
            const auto shape = entry.at("shape").get<Shape>();
            const auto offset = entry.at("offset").get<std::size_t>();
            if (offset + shape_size(shape) > total) throw SchemaError("checkpoint: tensor '" + name + "' out of range");
            Tensor* dst = nullptr;
            if (name == "mixture.weights") dst = &(mix_w = Tensor(shape));
            else if (name == "mixture.alpha") dst = &(mix_a = Tensor(shape));
            else if (auto it = slots.find(name); it != slots.end()) {
                dst = it->second;
                ++filled;
            } else {
                throw SchemaError("checkpoint: tensor '" + name + "' does not belong to the configured model");
            }
            if (dst->shape() != shape)
                throw SchemaError("checkpoint: tensor '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                                  shape_str(dst->shape()));
            for (std::size_t i = 0; i < dst->size(); ++i) (*dst)[i] = static_cast<real>(payload[offset + i]);
        }
        if (filled != expected) throw SchemaError("checkpoint: missing model tensors");
        if (!mix_w.empty()) {
            if (mix_a.rank() != 2 || mix_a.dim(0) != mix_w.size()) throw SchemaError("checkpoint: malformed mixture");
            DirichletMixture m;
            m.weights = mix_w.vec();
            for (std::size_t c = 0; c < mix_a.dim(0); ++c)
                m.alpha.emplace_back(mix_a.data() + c * mix_a.dim(1), mix_a.data() + (c + 1) * mix_a.dim(1));
            ck.mixture = std::move(m);
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("checkpoint: malformed manifest: ") + e.what());
    }
    return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint '" + path + "'");
    return load_checkpoint(in);
}

}  // namespace gepc
