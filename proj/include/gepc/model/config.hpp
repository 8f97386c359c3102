#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gepc/graph/sagc.hpp"
#include "gepc/pose/io.hpp"
#include "gepc/pose/transform.hpp"

namespace gepc {

struct TrainConfig {
    std::size_t pretrain_epochs = 25;
    std::size_t finetune_epochs = 25;
    std::size_t batch_size = 256;
    real lr = real(1e-3);
    std::size_t update_interval = 0;  // optimizer steps between E-steps; 0 = once per epoch
    bool augment = true;
    AugmentConfig augmentation;
};

struct ModelConfig {
    SkeletonLayout layout = layouts::coco17();
    std::size_t window = 12;
    std::size_t window_stride = 6;
    NormalizeMode normalize = NormalizeMode::per_window;
    std::vector<std::size_t> channels{32, 64, 64, 128};
    std::vector<std::size_t> strides{1, 2, 1, 3};
    std::size_t temporal_kernel = 9;
    std::size_t latent_dim = 128;
    BranchMask branches;
    std::size_t attention_channels = 0;
    bool per_frame_attention = false;
    InitScheme init = InitScheme::uniform_fan_in;
    std::size_t clusters = 10;
    real lambda = real(0.5);
    std::uint64_t seed = 0;
    TrainConfig train;

    std::size_t total_stride() const {
        std::size_t s = 1;
        for (auto v : strides) s *= v;
        return s;
    }
    std::size_t coarse_frames() const { return window / total_stride(); }

    void validate() const {
        layout.validate();
        if (channels.empty()) throw ConfigError("config field 'channels': at least one block required");
        if (channels.size() != strides.size())
            throw ConfigError("config field 'strides': expected " + std::to_string(channels.size()) + " entries");
        for (auto c : channels)
            if (c == 0) throw ConfigError("config field 'channels': entries must be positive");
        for (auto s : strides)
            if (s == 0) throw ConfigError("config field 'strides': entries must be positive");
        if (window == 0 || window % total_stride() != 0)
            throw ConfigError("config field 'window': " + std::to_string(window) +
                              " is not a multiple of the total stride " + std::to_string(total_stride()));
        if (window_stride == 0) throw ConfigError("config field 'window_stride': must be positive");
        if (temporal_kernel % 2 == 0) throw ConfigError("config field 'temporal_kernel': must be odd");
        if (latent_dim == 0) throw ConfigError("config field 'latent_dim': must be positive");
        if (clusters < 2) throw ConfigError("config field 'clusters': K must be at least 2");
        if (!(lambda >= 0)) throw ConfigError("config field 'lambda': must be non-negative");
        if (train.batch_size == 0) throw ConfigError("config field 'train.batch_size': must be positive");
        if (!(train.lr > 0)) throw ConfigError("config field 'train.lr': must be positive");
    }

    std::vector<std::string> warnings() const {
        std::vector<std::string> w;
        if (latent_dim < clusters)
            w.push_back("latent_dim " + std::to_string(latent_dim) + " is smaller than clusters " +
                        std::to_string(clusters));
        return w;
    }
};

namespace detail {

inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw ConfigError("config field '" + where + k + "': unknown key");
}

template <class T>
void read_field(const json& j, const char* key, T& out, const std::string& where = "") {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config field '" + where + key + "': " + e.what());
    }
}

}  // namespace detail

inline json to_json(const TrainConfig& t) {
    return {{"pretrain_epochs", t.pretrain_epochs},
            {"finetune_epochs", t.finetune_epochs},
            {"batch_size", t.batch_size},
            {"lr", t.lr},
            {"update_interval", t.update_interval},
            {"augment", t.augment},
            {"max_rotation", t.augmentation.max_rotation},
            {"flip_probability", t.augmentation.flip_probability}};
}

inline json to_json(const ModelConfig& c) {
    return {{"layout", layout_to_json(c.layout)},
            {"window", c.window},
            {"window_stride", c.window_stride},
            {"normalize", to_string(c.normalize)},
            {"channels", c.channels},
            {"strides", c.strides},
            {"temporal_kernel", c.temporal_kernel},
            {"latent_dim", c.latent_dim},
            {"branches", c.branches.str()},
            {"attention_channels", c.attention_channels},
            {"per_frame_attention", c.per_frame_attention},
            {"init", to_string(c.init)},
            {"clusters", c.clusters},
            {"lambda", c.lambda},
            {"seed", c.seed},
            {"train", to_json(c.train)}};
}

inline TrainConfig train_config_from_json(const json& j, TrainConfig t = {}) {
    if (!j.is_object()) throw ConfigError("config field 'train': expected an object");
    detail::reject_unknown(j, {"pretrain_epochs", "finetune_epochs", "batch_size", "lr", "update_interval", "augment",
                               "max_rotation", "flip_probability"},
                           "train.");
    detail::read_field(j, "pretrain_epochs", t.pretrain_epochs, "train.");
    detail::read_field(j, "finetune_epochs", t.finetune_epochs, "train.");
    detail::read_field(j, "batch_size", t.batch_size, "train.");
    detail::read_field(j, "lr", t.lr, "train.");
    detail::read_field(j, "update_interval", t.update_interval, "train.");
    detail::read_field(j, "augment", t.augment, "train.");
    detail::read_field(j, "max_rotation", t.augmentation.max_rotation, "train.");
    detail::read_field(j, "flip_probability", t.augmentation.flip_probability, "train.");
    return t;
}

/// Overlays the keys present in `j` onto `base` and validates the result.
inline ModelConfig model_config_from_json(const json& j, ModelConfig c = {}) {
    if (!j.is_object()) throw ConfigError("model config: expected a JSON object");
    detail::reject_unknown(j, {"layout", "window", "window_stride", "normalize", "channels", "strides",
                               "temporal_kernel", "latent_dim", "branches", "attention_channels",
                               "per_frame_attention", "init", "clusters", "lambda", "seed", "train"},
                           "");
    if (j.contains("layout")) {
        const json& l = j.at("layout");
        try {
            c.layout = l.is_string() ? layouts::builtin(l.get<std::string>()) : layout_from_json(l);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config field 'layout': ") + e.what());
        }
    }
    detail::read_field(j, "window", c.window);
    detail::read_field(j, "window_stride", c.window_stride);
    if (j.contains("normalize")) {
        std::string s;
        detail::read_field(j, "normalize", s);
        c.normalize = normalize_mode_from_string(s);
    }
    detail::read_field(j, "channels", c.channels);
    detail::read_field(j, "strides", c.strides);
    detail::read_field(j, "temporal_kernel", c.temporal_kernel);
    detail::read_field(j, "latent_dim", c.latent_dim);
    if (j.contains("branches")) {
        std::string s;
        detail::read_field(j, "branches", s);
        c.branches = BranchMask::parse(s);
    }
    detail::read_field(j, "attention_channels", c.attention_channels);
    detail::read_field(j, "per_frame_attention", c.per_frame_attention);
    if (j.contains("init")) {
        std::string s;
        detail::read_field(j, "init", s);
        c.init = init_scheme_from_string(s);
    }
    detail::read_field(j, "clusters", c.clusters);
    detail::read_field(j, "lambda", c.lambda);
    detail::read_field(j, "seed", c.seed);
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
    c.validate();
    return c;
}

}  // namespace gepc
