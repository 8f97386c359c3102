#pragma once

// Deep embedded clustering fine-tuning: alternate between recomputing the
// target distribution with the model frozen (E-step) and Adam steps on
// L_rec + λ·L_cluster (M-step).

#include "gepc/cluster/kmeans.hpp"
#include "gepc/model/train.hpp"

namespace gepc {

/// Encodes the training set and initializes Θ from k-means centroids.
inline void init_clusters(Stgcae& model, const std::vector<Window>& windows, Rng& rng) {
    kmeans_init(model.cluster, encode_all(model, windows), rng);
}

/// Rows of Q selected by batch indices.
inline Tensor gather_rows(const Tensor& q, std::span<const std::size_t> idx) {
    const std::size_t k = q.dim(1);
    Tensor out({idx.size(), k});
    for (std::size_t r = 0; r < idx.size(); ++r) std::copy_n(q.data() + idx[r] * k, k, out.data() + r * k);
    return out;
}

/// Combined objective for one batch: mse(x̂, x) + λ·KL(Q‖P)/N.
struct CombinedLoss {
    Var total;
    Var reconstruction;
    Var clustering;
};

inline CombinedLoss combined_loss(Stgcae& model, const Tensor& x, const Tensor& q, real lambda, Mode mode) {
    Var z = model.encode(Var(x), mode);
    Var rec = reconstruction_loss(model.decode(z, mode), x);
    Var p = soft_assign(z, model.cluster.theta);
    Var cl = ops::scale(clustering_loss(q, p), real{1} / static_cast<real>(x.dim(0)));
    return {ops::add(rec, ops::scale(cl, lambda)), rec, cl};
}

inline TrainReport finetune(Stgcae& model, const std::vector<Window>& windows, std::size_t epochs, Rng& rng,
                            const EpochCallback& on_epoch = {}) {
    TrainReport report{"finetune", {}, {}};
    if (epochs == 0) return report;
    if (windows.empty()) throw ConfigError("finetune: empty training set");
    if (!model.cluster.initialized) throw ConfigError("finetune: clustering layer not initialized");
    const ModelConfig& cfg = model.config();
    Adam adam({cfg.train.lr});
    auto params = model.all_parameters();
    Tensor q;
    std::size_t step = 0;
    auto e_step = [&] {
        Tensor p = assign_all(model, windows);
        q = target_distribution(p);
        report.estep_entropy.push_back(mean_row_entropy(p));
        return report.estep_entropy.back();
    };
    for (std::size_t e = 0; e < epochs; ++e) {
        EpochStats s{e, 0, real{0}, std::nullopt};
        std::size_t seen = 0;
        try {
            if (cfg.train.update_interval == 0) s.entropy = e_step();
            for_each_batch(windows, cfg, rng, [&](const Tensor& x, std::span<const std::size_t> idx) {
                if (cfg.train.update_interval && step % cfg.train.update_interval == 0) {
                    const real h = e_step();
                    if (!s.entropy) s.entropy = h;
                }
                ++step;
                CombinedLoss loss = combined_loss(model, x, gather_rows(q, idx), cfg.lambda, Mode::train);
                backprop(loss.total);
                adam.step(params);
                const real w = static_cast<real>(idx.size());
                s.reconstruction += loss.reconstruction.item() * w;
                *s.clustering += loss.clustering.item() * w;
                seen += idx.size();
            });
        } catch (const NumericError& err) {
            rethrow_divergence(err, "fine-tuning", e);
        }
        s.reconstruction /= static_cast<real>(seen);
        *s.clustering /= static_cast<real>(seen);
        report.epochs.push_back(s);
        if (on_epoch) on_epoch(s);
    }
    e_step();
    return report;
}

}  // namespace gepc
