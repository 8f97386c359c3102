#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "gepc/core/autograd.hpp"

namespace gepc {

struct AdamConfig {
    real lr = real(1e-3);
    real beta1 = real(0.9);
    real beta2 = real(0.999);
    real eps = real(1e-8);
};

/// Adam with bias correction. Moment buffers are created lazily, keyed by
/// the order of the parameter list, which must stay fixed between steps.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const noexcept { return cfg_; }
    std::uint64_t steps() const noexcept { return step_; }

    void step(const std::vector<NamedParameter>& params) {
        if (m_.empty()) {
            for (const auto& p : params) {
                m_.emplace_back(p.param->shape());
                v_.emplace_back(p.param->shape());
            }
        }
        if (m_.size() != params.size()) throw ConfigError("Adam: parameter list changed between steps");
        ++step_;
        const real bc1 = 1 - std::pow(cfg_.beta1, static_cast<real>(step_));
        const real bc2 = 1 - std::pow(cfg_.beta2, static_cast<real>(step_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Parameter& p = *params[i].param;
            if (!p.trainable()) continue;
            Tensor& g = p.grad();
            Tensor& w = p.value();
            Tensor& m = m_[i];
            Tensor& v = v_[i];
            for (std::size_t k = 0; k < w.size(); ++k) {
                m[k] = cfg_.beta1 * m[k] + (1 - cfg_.beta1) * g[k];
                v[k] = cfg_.beta2 * v[k] + (1 - cfg_.beta2) * g[k] * g[k];
                const real mhat = m[k] / bc1;
                const real vhat = v[k] / bc2;
                w[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
            g.zero();
        }
    }

private:
    AdamConfig cfg_;
    std::uint64_t step_ = 0;
    std::vector<Tensor> m_, v_;
};

inline void zero_grads(const std::vector<NamedParameter>& params) {
    for (const auto& p : params) p.param->zero_grad();
}

}  // namespace gepc
