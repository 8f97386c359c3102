#pragma once

// Spatial graph operators: normalized GCN propagation, attention-inferred
// adjacency and the three-branch spatial attention graph convolution (SAGC).

#include <cmath>
#include <string>
#include <vector>

#include "gepc/core/batch_norm.hpp"
#include "gepc/core/init.hpp"
#include "gepc/core/ops.hpp"

namespace gepc {

/// Buffer (non-trainable state) addressed by name for serialization.
struct NamedBuffer {
    std::string name;
    Tensor* tensor;
};

/// Symmetric normalization with self-loops: D^-1/2 (A + I) D^-1/2.
inline Tensor normalize_adjacency(const Tensor& a) {
    if (a.rank() != 2 || a.dim(0) != a.dim(1)) throw ShapeError("normalize_adjacency: square matrix required");
    const std::size_t nv = a.dim(0);
    Tensor s = a;
    for (std::size_t i = 0; i < nv; ++i) {
        for (std::size_t j = 0; j < nv; ++j)
            if (s.at(i, j) < 0) throw ConfigError("normalize_adjacency: negative entry");
        s.at(i, i) += 1;
    }
    std::vector<real> inv_sqrt(nv);
    for (std::size_t i = 0; i < nv; ++i) {
        real d = 0;
        for (std::size_t j = 0; j < nv; ++j) d += s.at(i, j);
        inv_sqrt[i] = real{1} / std::sqrt(d);
    }
    for (std::size_t i = 0; i < nv; ++i)
        for (std::size_t j = 0; j < nv; ++j) s.at(i, j) *= inv_sqrt[i] * inv_sqrt[j];
    return s;
}

/// Which adjacency branches a SAGC layer uses: static A, global B, inferred C.
struct BranchMask {
    bool static_adj = true;
    bool global_adj = true;
    bool inferred_adj = true;

    std::size_t count() const noexcept { return static_adj + global_adj + inferred_adj; }

    /// Parses a mask such as "abc", "a" or "ac".
    static BranchMask parse(const std::string& s) {
        BranchMask m{false, false, false};
        for (char ch : s) {
            if (ch == 'a' || ch == 'A') m.static_adj = true;
            else if (ch == 'b' || ch == 'B') m.global_adj = true;
            else if (ch == 'c' || ch == 'C') m.inferred_adj = true;
            else throw ConfigError(std::string("branch mask: unknown branch '") + ch + "'");
        }
        if (m.count() == 0) throw ConfigError("branch mask: no branch enabled");
        return m;
    }

    std::string str() const {
        std::string s;
        if (static_adj) s += 'a';
        if (global_adj) s += 'b';
        if (inferred_adj) s += 'c';
        return s;
    }
};

/// Affine batch-norm parameters plus running statistics.
struct BatchNormLayer {
    Parameter gamma;
    Parameter beta;
    BatchNormStats stats;

    BatchNormLayer() = default;
    explicit BatchNormLayer(std::size_t channels)
        : gamma(Tensor({channels}, real{1})), beta(Tensor({channels}, real{0})), stats(channels) {}

    Var forward(const Var& x, Mode mode) { return ops::batch_norm(x, gamma, beta, stats, mode); }

    void parameters(const std::string& prefix, std::vector<NamedParameter>& out) {
        out.push_back({prefix + ".gamma", &gamma});
        out.push_back({prefix + ".beta", &beta});
    }
    void buffers(const std::string& prefix, std::vector<NamedBuffer>& out) {
        out.push_back({prefix + ".running_mean", &stats.mean});
        out.push_back({prefix + ".running_var", &stats.var});
    }
};

/// One GCN operator: H' = ReLU(BN(Â H W)), per frame. `bn` may be null.
inline Var gcn_forward(const Var& x, const Var& adj, const Var& weight, BatchNormLayer* bn, Mode mode) {
    Var h = ops::graph_propagate(ops::channel_mix(x, weight), adj);
    if (bn) h = bn->forward(h, mode);
    return ops::relu(h);
}

/// Sample-specific adjacency from multiplicative attention over
/// time-averaged node features: softmax_rows((X W1)(X W2)ᵀ), [N,V,V].
inline Var infer_attention_adjacency(const Var& x, const Var& w1, const Var& w2) {
    Var xm = ops::time_mean(x);
    return ops::softmax(ops::batched_abt(ops::node_embed(xm, w1), ops::node_embed(xm, w2)), 2);
}

struct SagcConfig {
    BranchMask branches;
    std::size_t attention_channels = 0;  // 0 -> max(4, C_in / 4)
    std::size_t branch_channels = 0;     // 0 -> C_out
    bool per_frame_attention = false;
    InitScheme init = InitScheme::uniform_fan_in;
};

/// Spatial attention graph convolution: one GCN per enabled adjacency type,
/// outputs stacked on channels, a learned 1x1 reduction to C_out, plus a
/// residual (projected when C_in != C_out).
class SagcLayer {
public:
    SagcLayer() = default;
    SagcLayer(std::size_t c_in, std::size_t c_out, std::size_t joints, const SagcConfig& cfg, Rng& rng)
        : c_in_(c_in), c_out_(c_out), cfg_(cfg) {
        if (cfg.branches.count() == 0) throw ConfigError("SAGC: all branches disabled");
        const std::size_t cb = cfg.branch_channels ? cfg.branch_channels : c_out;
        const std::size_t ca = cfg.attention_channels ? cfg.attention_channels : std::max<std::size_t>(4, c_in / 4);
        auto weight = [&](std::size_t rows, std::size_t cols) {
            return Parameter(init_weight({rows, cols}, rows, cfg.init, rng));
        };
        if (cfg.branches.static_adj) {
            w_static = weight(c_in, cb);
            bn_static = BatchNormLayer(cb);
        }
        if (cfg.branches.global_adj) {
            w_global = weight(c_in, cb);
            bn_global = BatchNormLayer(cb);
            global_adj = Parameter(Tensor({joints, joints}, real{1} / static_cast<real>(joints)));
        }
        if (cfg.branches.inferred_adj) {
            w_inferred = weight(c_in, cb);
            bn_inferred = BatchNormLayer(cb);
            attn_w1 = weight(c_in, ca);
            attn_w2 = weight(c_in, ca);
        }
        const std::size_t stacked = cb * cfg.branches.count();
        reduce_w = weight(stacked, c_out);
        reduce_b = Parameter(Tensor({c_out}));
        if (c_in != c_out) residual_w = weight(c_in, c_out);
    }

    std::size_t in_channels() const noexcept { return c_in_; }
    std::size_t out_channels() const noexcept { return c_out_; }
    const SagcConfig& config() const noexcept { return cfg_; }
    bool projects_residual() const noexcept { return c_in_ != c_out_; }

    /// Inferred adjacency for this layer; [N,V,V], or [N*T,V,V] per frame.
    Var inferred_adjacency(const Var& x) const {
        return infer_attention_adjacency(cfg_.per_frame_attention ? ops::fold_time(x) : x, attn_w1, attn_w2);
    }

    /// Stacked branch outputs [N, count*C_branch, T, V], before reduction.
    Var branch_outputs(const Var& x, const Var& static_adj, Mode mode) {
        std::vector<Var> outs;
        if (cfg_.branches.static_adj) outs.push_back(gcn_forward(x, static_adj, w_static, &bn_static, mode));
        if (cfg_.branches.global_adj) outs.push_back(gcn_forward(x, global_adj, w_global, &bn_global, mode));
        if (cfg_.branches.inferred_adj) {
            Var c = inferred_adjacency(x);
            if (cfg_.per_frame_attention) {
                const std::size_t t = x.dim(2);
                Var h = ops::graph_propagate(ops::channel_mix(ops::fold_time(x), w_inferred), c);
                h = bn_inferred.forward(ops::unfold_time(h, t), mode);
                outs.push_back(ops::relu(h));
            } else {
                outs.push_back(gcn_forward(x, c, w_inferred, &bn_inferred, mode));
            }
        }
        return outs.size() == 1 ? outs[0] : ops::concat_channels(outs);
    }

    Var residual(const Var& x) const { return projects_residual() ? ops::channel_mix(x, residual_w) : x; }

    /// `static_adj` is the normalized static adjacency, shared by all layers.
    Var forward(const Var& x, const Var& static_adj, Mode mode) {
        if (x.value().rank() != 4 || x.dim(1) != c_in_)
            throw ShapeError("SAGC: input " + shape_str(x.shape()) + " for C_in=" + std::to_string(c_in_));
        Var stacked = branch_outputs(x, static_adj, mode);
        Var reduced = ops::add_bias(ops::channel_mix(stacked, reduce_w), reduce_b);
        return ops::add(reduced, residual(x));
    }

    void parameters(const std::string& p, std::vector<NamedParameter>& out) {
        if (cfg_.branches.static_adj) {
            out.push_back({p + ".static.weight", &w_static});
            bn_static.parameters(p + ".static.bn", out);
        }
        if (cfg_.branches.global_adj) {
            out.push_back({p + ".global.adjacency", &global_adj});
            out.push_back({p + ".global.weight", &w_global});
            bn_global.parameters(p + ".global.bn", out);
        }
        if (cfg_.branches.inferred_adj) {
            out.push_back({p + ".inferred.attn_w1", &attn_w1});
            out.push_back({p + ".inferred.attn_w2", &attn_w2});
            out.push_back({p + ".inferred.weight", &w_inferred});
            bn_inferred.parameters(p + ".inferred.bn", out);
        }
        out.push_back({p + ".reduce.weight", &reduce_w});
        out.push_back({p + ".reduce.bias", &reduce_b});
        if (projects_residual()) out.push_back({p + ".residual.weight", &residual_w});
    }

    void buffers(const std::string& p, std::vector<NamedBuffer>& out) {
        if (cfg_.branches.static_adj) bn_static.buffers(p + ".static.bn", out);
        if (cfg_.branches.global_adj) bn_global.buffers(p + ".global.bn", out);
        if (cfg_.branches.inferred_adj) bn_inferred.buffers(p + ".inferred.bn", out);
    }

    Parameter w_static, w_global, w_inferred;
    BatchNormLayer bn_static, bn_global, bn_inferred;
    Parameter global_adj;
    Parameter attn_w1, attn_w2;
    Parameter reduce_w, reduce_b;
    Parameter residual_w;

private:
    std::size_t c_in_ = 0, c_out_ = 0;
    SagcConfig cfg_;
};

}  // namespace gepc
