#pragma once

// Clustering layer: soft assignments of latent codes to K action-word
// centroids and the self-sharpening target distribution.

#include <cmath>
#include <string>
#include <vector>

#include "gepc/core/ops.hpp"

namespace gepc {

struct ClusteringLayer {
    Parameter theta;  // [K, d_z]
    bool initialized = false;

    ClusteringLayer() = default;
    ClusteringLayer(std::size_t k, std::size_t latent_dim) : theta(Tensor({k, latent_dim})) {}

    std::size_t clusters() const { return theta.shape().at(0); }
    std::size_t latent_dim() const { return theta.shape().at(1); }
};

/// p_ik = softmax_k(θ_kᵀ z_i); z is [N, d_z], θ is [K, d_z], result [N, K].
inline Var soft_assign(const Var& z, const Var& theta) {
    if (z.value().rank() != 2 || theta.value().rank() != 2 || z.dim(1) != theta.dim(1))
        throw ShapeError("soft_assign: codes " + shape_str(z.shape()) + " vs centroids " + shape_str(theta.shape()));
    const std::size_t n = z.dim(0), k = theta.dim(0), d = z.dim(1);
    Var logits = ops::batched_abt(ops::reshape(z, {1, n, d}), ops::reshape(theta, {1, k, d}));
    return ops::softmax(ops::reshape(logits, {n, k}), 1);
}

/// q_ik ∝ p_ik / sqrt(f_k) with f_k = Σ_i p_ik. Columns with f_k = 0 contribute 0.
inline Tensor target_distribution(const Tensor& p) {
    if (p.rank() != 2) throw ShapeError("target_distribution: expected [N,K], got " + shape_str(p.shape()));
    const std::size_t n = p.dim(0), k = p.dim(1);
    std::vector<real> inv_sqrt_f(k, 0);
    for (std::size_t j = 0; j < k; ++j) {
        real f = 0;
        for (std::size_t i = 0; i < n; ++i) f += p.at(i, j);
        inv_sqrt_f[j] = f > 0 ? real{1} / std::sqrt(f) : real{0};
    }
    Tensor q({n, k});
    for (std::size_t i = 0; i < n; ++i) {
        // Equal weights over the row's support leave a normalized row as is;
        // copying it avoids rounding in the renormalization.
        real w = -1;
        bool equal = true;
        for (std::size_t j = 0; j < k && equal; ++j)
            if (p.at(i, j) > 0) {
                if (w < 0) w = inv_sqrt_f[j];
                equal = inv_sqrt_f[j] == w;
            }
        if (equal && w > 0) {
            for (std::size_t j = 0; j < k; ++j) q.at(i, j) = p.at(i, j);
            continue;
        }
        real s = 0;
        for (std::size_t j = 0; j < k; ++j) s += q.at(i, j) = p.at(i, j) * inv_sqrt_f[j];
        if (s <= 0) throw NumericError("target_distribution: row " + std::to_string(i) + " has no mass");
        for (std::size_t j = 0; j < k; ++j) q.at(i, j) /= s;
    }
    return q;
}

inline constexpr real kProbabilityFloor = real(1e-12);

/// KL(Q || P) summed over all rows; Q is a constant target. `clamped` is set
/// when some p_ik fell below the floor where q_ik > 0.
inline Var clustering_loss(const Tensor& q, const Var& p, bool* clamped = nullptr) {
    if (clamped) {
        *clamped = false;
        for (std::size_t i = 0; i < q.size(); ++i)
            if (q[i] > 0 && p.value()[i] < kProbabilityFloor) *clamped = true;
    }
    return ops::kl_divergence(q, p, kProbabilityFloor);
}

/// Mean Shannon entropy (nats) of the rows of P.
inline real mean_row_entropy(const Tensor& p) {
    const std::size_t n = p.dim(0), k = p.dim(1);
    real h = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j)
            if (p.at(i, j) > 0) h -= p.at(i, j) * std::log(p.at(i, j));
    return n ? h / static_cast<real>(n) : real{0};
}

}  // namespace gepc
