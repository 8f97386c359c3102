#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "gepc/cluster/layer.hpp"
#include "gepc/core/init.hpp"

namespace gepc {

struct KMeansOptions {
    std::size_t max_iterations = 300;
    real tolerance = real(1e-10);  // stop when no centroid moves farther (squared)
};

struct KMeansResult {
    Tensor centroids;  // [K, d]
    std::vector<std::size_t> assignment;
    real inertia = 0;  // sum of squared distances
    std::size_t iterations = 0;
};

namespace detail {

inline real sq_dist(const real* a, const real* b, std::size_t d) {
    real s = 0;
    for (std::size_t i = 0; i < d; ++i) {
        const real t = a[i] - b[i];
        s += t * t;
    }
    return s;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded
/// with the point farthest from its current centroid.
inline KMeansResult kmeans(const Tensor& x, std::size_t k, Rng& rng, const KMeansOptions& opt = {}) {
    if (x.rank() != 2) throw ShapeError("kmeans: expected [N,d], got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), d = x.dim(1);
    if (k == 0) throw ConfigError("kmeans: K must be positive");
    if (n < k) throw ConfigError("kmeans: " + std::to_string(n) + " points for K=" + std::to_string(k));
    auto row = [&](std::size_t i) { return x.data() + i * d; };

    KMeansResult r;
    r.centroids = Tensor({k, d});
    auto cen = [&](std::size_t j) { return r.centroids.data() + j * d; };

    std::vector<real> closest(n, std::numeric_limits<real>::infinity());
    std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    std::copy_n(row(first), d, cen(0));
    for (std::size_t j = 1; j < k; ++j) {
        real total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            closest[i] = std::min(closest[i], detail::sq_dist(row(i), cen(j - 1), d));
            total += closest[i];
        }
        std::size_t pick = 0;
        if (total > 0) {
            real u = std::uniform_real_distribution<real>(0, total)(rng);
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                if (closest[i] <= 0) continue;
                if (u < closest[i]) {
                    pick = i;
                    break;
                }
                u -= closest[i];
            }
            while (closest[pick] <= 0) --pick;
        } else {
            pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        }
        std::copy_n(row(pick), d, cen(j));
    }

    r.assignment.assign(n, 0);
    std::vector<real> dist(n);
    for (r.iterations = 0; r.iterations < opt.max_iterations;) {
        ++r.iterations;
        for (std::size_t i = 0; i < n; ++i) {
            real best = std::numeric_limits<real>::infinity();
            for (std::size_t j = 0; j < k; ++j) {
                const real dj = detail::sq_dist(row(i), cen(j), d);
                if (dj < best) {
                    best = dj;
                    r.assignment[i] = j;
                }
            }
            dist[i] = best;
        }
        Tensor next({k, d});
        std::vector<std::size_t> count(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++count[r.assignment[i]];
            for (std::size_t c = 0; c < d; ++c) next.at(r.assignment[i], c) += row(i)[c];
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (count[j] == 0) {
                std::size_t far = 0;
                for (std::size_t i = 1; i < n; ++i)
                    if (dist[i] > dist[far]) far = i;
                std::copy_n(row(far), d, next.data() + j * d);
                dist[far] = 0;
                continue;
            }
            for (std::size_t c = 0; c < d; ++c) next.at(j, c) /= static_cast<real>(count[j]);
        }
        real shift = 0;
        for (std::size_t j = 0; j < k; ++j) shift = std::max(shift, detail::sq_dist(cen(j), next.data() + j * d, d));
        r.centroids = std::move(next);
        if (shift <= opt.tolerance) break;
    }
    r.inertia = 0;
    for (std::size_t i = 0; i < n; ++i) {
        real best = std::numeric_limits<real>::infinity();
        for (std::size_t j = 0; j < k; ++j) {
            const real dj = detail::sq_dist(row(i), cen(j), d);
            if (dj < best) {
                best = dj;
                r.assignment[i] = j;
            }
        }
        r.inertia += best;
    }
    return r;
}

/// θ_k = centroid_k / τ, with τ the mean distance of a point to its centroid.
inline void kmeans_init(ClusteringLayer& layer, const Tensor& z, Rng& rng, const KMeansOptions& opt = {}) {
    const std::size_t k = layer.clusters();
    if (z.rank() != 2 || z.dim(1) != layer.latent_dim())
        throw ShapeError("kmeans_init: codes " + shape_str(z.shape()) + " for d_z=" + std::to_string(layer.latent_dim()));
    KMeansResult km = kmeans(z, k, rng, opt);
    const std::size_t n = z.dim(0), d = z.dim(1);
    real tau = 0;
    for (std::size_t i = 0; i < n; ++i)
        tau += std::sqrt(detail::sq_dist(z.data() + i * d, km.centroids.data() + km.assignment[i] * d, d));
    tau /= static_cast<real>(n);
    if (!(tau > 0)) tau = 1;
    Tensor theta = km.centroids;
    theta *= real{1} / tau;
    layer.theta.value() = std::move(theta);
    layer.initialized = true;
}

}  // namespace gepc
