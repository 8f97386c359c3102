#pragma once

#include <cmath>

#include "gepc/core/autograd.hpp"
#include "gepc/core/ops.hpp"

namespace gepc {

enum class Mode { train, infer };

/// Running statistics of one batch-norm layer (buffers, not parameters).
struct BatchNormStats {
    Tensor mean;
    Tensor var;
    real momentum = real(0.1);
    real eps = real(1e-5);

    BatchNormStats() = default;
    explicit BatchNormStats(std::size_t channels)
        : mean(Shape{channels}, real{0}), var(Shape{channels}, real{1}) {}
};

namespace ops {

/// Per-channel normalization over every axis but 1. In train mode the batch
/// statistics are used and the running statistics updated (biased variance);
/// infer mode applies the frozen running statistics as an affine map.
inline Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormStats& stats, Mode mode) {
    if (x.value().rank() < 2) throw ShapeError("batch_norm: rank >= 2 required, got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1);
    if (n == 0 || x.value().size() == 0) throw ShapeError("batch_norm: empty batch");
    if (gamma.value().size() != c || beta.value().size() != c || stats.mean.size() != c)
        throw ShapeError("batch_norm: parameter size does not match " + std::to_string(c) + " channels");
    const std::size_t inner = x.value().size() / (n * c);
    const real count = static_cast<real>(n * inner);
    const real* X = x.value().data();

    Tensor mu({c}), invstd({c});
    if (mode == Mode::train) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            real s = 0;
            for (std::size_t b = 0; b < n; ++b) {
                const real* xs = X + (b * c + ch) * inner;
                for (std::size_t k = 0; k < inner; ++k) s += xs[k];
            }
            const real m = s / count;
            real ss = 0;
            for (std::size_t b = 0; b < n; ++b) {
                const real* xs = X + (b * c + ch) * inner;
                for (std::size_t k = 0; k < inner; ++k) ss += (xs[k] - m) * (xs[k] - m);
            }
            const real v = ss / count;
            mu[ch] = m;
            invstd[ch] = real{1} / std::sqrt(v + stats.eps);
            stats.mean[ch] = (1 - stats.momentum) * stats.mean[ch] + stats.momentum * m;
            stats.var[ch] = (1 - stats.momentum) * stats.var[ch] + stats.momentum * v;
        }
    } else {
        for (std::size_t ch = 0; ch < c; ++ch) {
            mu[ch] = stats.mean[ch];
            invstd[ch] = real{1} / std::sqrt(stats.var[ch] + stats.eps);
        }
    }

    Tensor xhat(x.shape()), out(x.shape());
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (b * c + ch) * inner;
            const real g = gamma.value()[ch], be = beta.value()[ch];
            for (std::size_t k = 0; k < inner; ++k) {
                const real h = (X[base + k] - mu[ch]) * invstd[ch];
                xhat[base + k] = h;
                out[base + k] = g * h + be;
            }
        }

    const bool train = mode == Mode::train;
    return detail::make_result(
        "batch_norm", std::move(out), {x, gamma, beta},
        [n, c, inner, count, invstd, xhat = std::move(xhat), train](detail::Node& self) {
            const real* G = self.grad.data();
            const Tensor& gam = self.parents[1]->value;
            Tensor* gx = detail::grad_of(self, 0);
            Tensor* gg = detail::grad_of(self, 1);
            Tensor* gb = detail::grad_of(self, 2);
            for (std::size_t ch = 0; ch < c; ++ch) {
                real sg = 0, sgh = 0;
                for (std::size_t b = 0; b < n; ++b) {
                    const std::size_t base = (b * c + ch) * inner;
                    for (std::size_t k = 0; k < inner; ++k) {
                        sg += G[base + k];
                        sgh += G[base + k] * xhat[base + k];
                    }
                }
                if (gg) (*gg)[ch] += sgh;
                if (gb) (*gb)[ch] += sg;
                if (!gx) continue;
                const real scale = gam[ch] * invstd[ch];
                for (std::size_t b = 0; b < n; ++b) {
                    const std::size_t base = (b * c + ch) * inner;
                    for (std::size_t k = 0; k < inner; ++k) {
                        if (train)
                            (*gx)[base + k] += scale * (G[base + k] - sg / count - xhat[base + k] * sgh / count);
                        else
                            (*gx)[base + k] += scale * G[base + k];
                    }
                }
            }
        });
}

}  // namespace ops
}  // namespace gepc
