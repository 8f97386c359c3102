#pragma once

#include "gepc/model/stgcae.hpp"
#include "test_util.hpp"

namespace gepc::test_support {

/// Five-joint chain, small enough for exhaustive finite differences.
inline SkeletonLayout chain5() { return {"chain5", 5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}}, 3, 2, {{0, 4}, {1, 3}}}; }

inline ModelConfig tiny_config(std::uint64_t seed = 1) {
    ModelConfig c;
    c.layout = chain5();
    c.window = 6;
    c.window_stride = 3;
    c.channels = {4, 5};
    c.strides = {2, 3};
    c.temporal_kernel = 3;
    c.latent_dim = 4;
    c.attention_channels = 2;
    c.clusters = 3;
    c.seed = seed;
    c.train.batch_size = 4;
    c.train.lr = real(1e-2);
    return c;
}

/// Gives every batch-norm layer non-trivial running statistics and affine terms.
inline void randomize_batch_norm(Stgcae& model, Rng& rng) {
    for (auto& b : model.buffers()) {
        const bool is_var = b.name.ends_with("running_var");
        *b.tensor = random_tensor(b.tensor->shape(), rng, is_var ? 0.5 : -0.2, is_var ? 1.5 : 0.2);
    }
    for (auto& p : model.parameters()) {
        if (p.name.ends_with(".gamma")) p.param->value() = random_tensor(p.param->shape(), rng, 0.5, 1.5);
        if (p.name.ends_with(".beta")) p.param->value() = random_tensor(p.param->shape(), rng, -0.2, 0.2);
    }
}

/// Sinusoidal windows of the tiny config's shape.
inline std::vector<Window> wave_windows(std::size_t n, Rng& rng, const ModelConfig& cfg, real freq = 1) {
    std::vector<Window> out;
    std::uniform_real_distribution<real> phase(0, 6.28);
    for (std::size_t i = 0; i < n; ++i) {
        Window w;
        w.video_id = "v" + std::to_string(i);
        w.person_id = "0";
        w.valid_frames = cfg.window;
        w.data = Tensor({cfg.layout.channels, cfg.window, cfg.layout.joints});
        w.confidence = Tensor({cfg.window, cfg.layout.joints}, 1.0);
        const real ph = phase(rng);
        for (std::size_t t = 0; t < cfg.window; ++t)
            for (std::size_t v = 0; v < cfg.layout.joints; ++v) {
                w.data.at(0, t, v) = real(0.5) * std::sin(freq * static_cast<real>(t) + ph + static_cast<real>(v));
                w.data.at(1, t, v) = static_cast<real>(v) / 4 - real(0.5);
                w.data.at(2, t, v) = 1;
            }
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace gepc::test_support
