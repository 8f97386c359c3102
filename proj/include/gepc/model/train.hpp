#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "gepc/core/optim.hpp"
#include "gepc/model/stgcae.hpp"

namespace gepc {

/// Cuts sequences into windows and normalizes them as the config asks.
inline std::vector<Window> make_windows(const std::vector<PoseSequence>& seqs, const ModelConfig& cfg) {
    std::vector<Window> out;
    for (const auto& s : seqs) {
        if (s.length() == 0) continue;
        if (s.joints() != cfg.layout.joints || s.channels() != cfg.layout.channels)
            throw SchemaError("sequence " + s.video_id + "/" + s.person_id + " does not match layout '" +
                              cfg.layout.name + "'");
        if (cfg.normalize == NormalizeMode::global) {
            for (auto& w : segment_windows(normalize_pose(s, cfg.layout), cfg.window, cfg.window_stride))
                out.push_back(std::move(w));
        } else {
            for (auto& w : segment_windows(s, cfg.window, cfg.window_stride))
                out.push_back(normalize_window(std::move(w), cfg.layout));
        }
    }
    return out;
}

inline Tensor stack_windows(const std::vector<Window>& ws, std::span<const std::size_t> idx) {
    std::vector<const Window*> ptrs;
    ptrs.reserve(idx.size());
    for (auto i : idx) ptrs.push_back(&ws.at(i));
    return stack_windows(ptrs);
}

/// Shuffles once per epoch and yields augmented mini-batches. Pretraining
/// and fine-tuning both draw from this so a shared RNG state gives the same
/// batches in either loop.
inline void for_each_batch(const std::vector<Window>& windows, const ModelConfig& cfg, Rng& rng,
                           const std::function<void(const Tensor&, std::span<const std::size_t>)>& fn) {
    std::vector<std::size_t> order(windows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t bs = cfg.train.batch_size;
    for (std::size_t start = 0; start < order.size(); start += bs) {
        std::span<const std::size_t> idx(order.data() + start, std::min(bs, order.size() - start));
        if (!cfg.train.augment) {
            fn(stack_windows(windows, idx), idx);
            continue;
        }
        std::vector<Window> aug;
        aug.reserve(idx.size());
        for (auto i : idx) aug.push_back(augment(windows[i], cfg.layout, cfg.train.augmentation, rng));
        std::vector<std::size_t> local(idx.size());
        std::iota(local.begin(), local.end(), std::size_t{0});
        fn(stack_windows(aug, local), idx);
    }
}

/// Latent codes for all windows, inference mode, no graph recorded.
inline Tensor encode_all(Stgcae& model, const std::vector<Window>& windows, std::size_t batch = 512) {
    NoGradGuard ng;
    const std::size_t n = windows.size(), d = model.config().latent_dim;
    Tensor z({n, d});
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t m = std::min(batch, n - start);
        Var zb = model.encode(Var(stack_windows(windows, std::span<const std::size_t>(idx.data() + start, m))), Mode::infer);
        std::copy_n(zb.value().data(), m * d, z.data() + start * d);
    }
    return z;
}

/// Soft assignments for all windows.
inline Tensor assign_all(Stgcae& model, const std::vector<Window>& windows, std::size_t batch = 512) {
    NoGradGuard ng;
    return soft_assign(Var(encode_all(model, windows, batch)), model.cluster.theta).value();
}

struct EpochStats {
    std::size_t epoch = 0;
    real reconstruction = 0;
    std::optional<real> clustering;
    std::optional<real> entropy;  // mean row entropy of P at the epoch's first E-step
};

struct TrainReport {
    std::string stage;
    std::vector<EpochStats> epochs;
    std::vector<real> estep_entropy;  // one entry per E-step
};

inline json to_json(const TrainReport& r) {
    json ep = json::array();
    for (const auto& e : r.epochs) {
        json j{{"epoch", e.epoch}, {"reconstruction", e.reconstruction}};
        if (e.clustering) j["clustering"] = *e.clustering;
        if (e.entropy) j["entropy"] = *e.entropy;
        ep.push_back(std::move(j));
    }
    json j{{"stage", r.stage}, {"epochs", std::move(ep)}};
    if (!r.estep_entropy.empty()) j["estep_entropy"] = r.estep_entropy;
    return j;
}

using EpochCallback = std::function<void(const EpochStats&)>;

[[noreturn]] inline void rethrow_divergence(const NumericError& e, const char* stage, std::size_t epoch) {
    throw NumericError(std::string(stage) + " diverged in epoch " + std::to_string(epoch) + " (" + e.what() +
                       "); try a smaller train.lr");
}

/// Adam on the reconstruction loss over shuffled, augmented mini-batches.
inline TrainReport pretrain(Stgcae& model, const std::vector<Window>& windows, std::size_t epochs, Rng& rng,
                            const EpochCallback& on_epoch = {}) {
    TrainReport report{"pretrain", {}, {}};
    if (epochs == 0) return report;
    if (windows.empty()) throw ConfigError("pretrain: empty training set");
    const ModelConfig& cfg = model.config();
    Adam adam({cfg.train.lr});
    auto params = model.parameters();
    for (std::size_t e = 0; e < epochs; ++e) {
        real total = 0;
        std::size_t seen = 0;
        try {
            for_each_batch(windows, cfg, rng, [&](const Tensor& x, std::span<const std::size_t> idx) {
                Var loss = reconstruction_loss(model.reconstruct(Var(x), Mode::train), x);
                backprop(loss);
                adam.step(params);
                total += loss.item() * static_cast<real>(idx.size());
                seen += idx.size();
            });
        } catch (const NumericError& err) {
            rethrow_divergence(err, "pretraining", e);
        }
        EpochStats s{e, total / static_cast<real>(seen), std::nullopt, std::nullopt};
        report.epochs.push_back(s);
        if (on_epoch) on_epoch(s);
    }
    return report;
}

}  // namespace gepc
