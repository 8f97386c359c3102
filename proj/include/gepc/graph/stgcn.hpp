#pragma once

#include "gepc/graph/sagc.hpp"

namespace gepc {

struct BlockConfig {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t stride = 1;
    std::size_t temporal_kernel = 9;
    SagcConfig sagc;
};

/// Spatio-temporal block: y = residual(x) + BN(TemporalConv(SAGC(x))).
/// The residual path average-pools over time when stride > 1 and projects
/// channels when they change.
class StgcnBlock {
public:
    StgcnBlock() = default;
    StgcnBlock(const BlockConfig& cfg, std::size_t joints, Rng& rng)
        : cfg_(cfg), spatial(cfg.in_channels, cfg.out_channels, joints, cfg.sagc, rng), bn(cfg.out_channels) {
        if (cfg.temporal_kernel % 2 == 0)
            throw ConfigError("temporal kernel size must be odd, got " + std::to_string(cfg.temporal_kernel));
        if (cfg.stride == 0) throw ConfigError("block stride must be >= 1");
        const std::size_t c = cfg.out_channels, k = cfg.temporal_kernel;
        temporal = Parameter(init_weight({c, c, k}, c * k, cfg.sagc.init, rng));
        if (cfg.in_channels != cfg.out_channels)
            residual_w = Parameter(init_weight({cfg.in_channels, c}, cfg.in_channels, cfg.sagc.init, rng));
    }

    const BlockConfig& config() const noexcept { return cfg_; }

    Var residual(const Var& x) const {
        Var r = ops::temporal_avg_pool(x, cfg_.stride);
        return cfg_.in_channels != cfg_.out_channels ? ops::channel_mix(r, residual_w) : r;
    }

    Var forward(const Var& x, const Var& static_adj, Mode mode) {
        Var main = spatial.forward(x, static_adj, mode);
        main = bn.forward(ops::temporal_conv(main, temporal, cfg_.stride), mode);
        return ops::add(residual(x), main);
    }

    void parameters(const std::string& p, std::vector<NamedParameter>& out) {
        spatial.parameters(p + ".sagc", out);
        out.push_back({p + ".temporal.weight", &temporal});
        bn.parameters(p + ".bn", out);
        if (cfg_.in_channels != cfg_.out_channels) out.push_back({p + ".residual.weight", &residual_w});
    }

    void buffers(const std::string& p, std::vector<NamedBuffer>& out) {
        spatial.buffers(p + ".sagc", out);
        bn.buffers(p + ".bn", out);
    }

private:
    BlockConfig cfg_;

public:
    SagcLayer spatial;
    Parameter temporal;  // [C_out, C_out, k]
    BatchNormLayer bn;
    Parameter residual_w;
};

}  // namespace gepc
