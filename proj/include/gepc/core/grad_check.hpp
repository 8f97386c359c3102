#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "gepc/core/autograd.hpp"

namespace gepc {

/// Compares the recorded-graph gradient of a scalar function with central
/// differences. Returns max_i |analytic - numeric| / max(1, |analytic| + |numeric|).
/// `f` must rebuild its graph on every call and be deterministic.
inline real grad_check(const std::function<Var()>& f, Parameter& theta, real h = real(1e-5)) {
    if (!(h > 0)) throw ConfigError("grad_check: step must be positive");
    const bool was_trainable = theta.trainable();
    theta.set_trainable(true);
    theta.zero_grad();
    backprop(f());
    const Tensor analytic = theta.grad();
    theta.zero_grad();

    real worst = 0;
    Tensor& w = theta.value();
    for (std::size_t i = 0; i < w.size(); ++i) {
        const real orig = w[i];
        real plus, minus;
        {
            NoGradGuard ng;
            w[i] = orig + h;
            plus = f().item();
            w[i] = orig - h;
            minus = f().item();
        }
        w[i] = orig;
        const real numeric = (plus - minus) / (2 * h);
        const real err = std::abs(analytic[i] - numeric) /
                         std::max(real{1}, std::abs(analytic[i]) + std::abs(numeric));
        worst = std::max(worst, err);
    }
    theta.set_trainable(was_trainable);
    return worst;
}

}  // namespace gepc
