#pragma once

// Spatio-temporal graph convolutional autoencoder. The encoder stacks
// ST-GCN blocks with temporal strides, pools to one vector and maps it to
// the latent code; the decoder mirrors it with temporal upsampling.

#include <memory>
#include <string>
#include <vector>

#include "gepc/cluster/layer.hpp"
#include "gepc/graph/stgcn.hpp"
#include "gepc/model/config.hpp"

namespace gepc {

class Stgcae {
public:
    explicit Stgcae(const ModelConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(cfg_.seed);
        const std::size_t nv = cfg_.layout.joints, c_in = cfg_.layout.channels;
        const std::size_t nb = cfg_.channels.size(), c_last = cfg_.channels.back();
        adjacency_ = Var(normalize_adjacency(build_static_adjacency(cfg_.layout)));

        for (std::size_t i = 0; i < nb; ++i) {
            BlockConfig b{i == 0 ? c_in : cfg_.channels[i - 1], cfg_.channels[i], cfg_.strides[i],
                          cfg_.temporal_kernel, sagc_config()};
            encoder_.emplace_back(b, nv, rng);
        }
        enc_w_ = Parameter(init_weight({c_last, cfg_.latent_dim}, c_last, cfg_.init, rng));
        enc_b_ = Parameter(Tensor({cfg_.latent_dim}));

        const std::size_t coarse = c_last * cfg_.coarse_frames() * nv;
        dec_w_ = Parameter(init_weight({cfg_.latent_dim, coarse}, cfg_.latent_dim, cfg_.init, rng));
        dec_b_ = Parameter(Tensor({coarse}));
        for (std::size_t i = nb; i-- > 0;) {
            BlockConfig b{cfg_.channels[i], cfg_.channels[i == 0 ? 0 : i - 1], 1, cfg_.temporal_kernel,
                          sagc_config()};
            decoder_.emplace_back(b, nv, rng);
        }
        out_w_ = Parameter(init_weight({cfg_.channels[0], c_in}, cfg_.channels[0], cfg_.init, rng));
        out_b_ = Parameter(Tensor({c_in}));
        cluster = ClusteringLayer(cfg_.clusters, cfg_.latent_dim);
    }

    Stgcae(const Stgcae&) = delete;
    Stgcae& operator=(const Stgcae&) = delete;
    Stgcae(Stgcae&&) = default;
    Stgcae& operator=(Stgcae&&) = default;

    const ModelConfig& config() const noexcept { return cfg_; }
    Shape input_shape(std::size_t batch) const {
        return {batch, cfg_.layout.channels, cfg_.window, cfg_.layout.joints};
    }

    /// [N, C, T_w, V] -> [N, d_z]
    Var encode(const Var& x, Mode mode) {
        const Shape& s = x.shape();
        if (s.size() != 4 || s[1] != cfg_.layout.channels || s[2] != cfg_.window || s[3] != cfg_.layout.joints)
            throw ShapeError("encode: input " + shape_str(s) + " does not match " + shape_str(input_shape(0)));
        Var h = x;
        for (auto& b : encoder_) h = b.forward(h, adjacency_, mode);
        return ops::add_bias(ops::matmul(ops::global_avg_pool(h), enc_w_), enc_b_);
    }

    /// [N, d_z] -> [N, C, T_w, V]
    Var decode(const Var& z, Mode mode) {
        if (z.value().rank() != 2 || z.dim(1) != cfg_.latent_dim)
            throw ShapeError("decode: latent " + shape_str(z.shape()) + ", expected d_z=" +
                             std::to_string(cfg_.latent_dim));
        const std::size_t n = z.dim(0), nb = cfg_.channels.size();
        Var h = ops::add_bias(ops::matmul(z, dec_w_), dec_b_);
        h = ops::reshape(h, {n, cfg_.channels.back(), cfg_.coarse_frames(), cfg_.layout.joints});
        for (std::size_t j = 0; j < nb; ++j) {
            const std::size_t up = cfg_.strides[nb - 1 - j];
            if (up > 1) h = ops::temporal_upsample(h, up);
            h = decoder_[j].forward(h, adjacency_, mode);
        }
        return ops::add_bias(ops::channel_mix(h, out_w_), out_b_);
    }

    Var reconstruct(const Var& x, Mode mode) { return decode(encode(x, mode), mode); }

    std::vector<NamedParameter> encoder_parameters() {
        std::vector<NamedParameter> out;
        for (std::size_t i = 0; i < encoder_.size(); ++i) encoder_[i].parameters("encoder.block" + std::to_string(i), out);
        out.push_back({"encoder.latent.weight", &enc_w_});
        out.push_back({"encoder.latent.bias", &enc_b_});
        return out;
    }

    std::vector<NamedParameter> decoder_parameters() {
        std::vector<NamedParameter> out{{"decoder.latent.weight", &dec_w_}, {"decoder.latent.bias", &dec_b_}};
        for (std::size_t i = 0; i < decoder_.size(); ++i) decoder_[i].parameters("decoder.block" + std::to_string(i), out);
        out.push_back({"decoder.output.weight", &out_w_});
        out.push_back({"decoder.output.bias", &out_b_});
        return out;
    }

    /// Autoencoder parameters (encoder then decoder), without the clustering layer.
    std::vector<NamedParameter> parameters() {
        auto out = encoder_parameters();
        for (auto& p : decoder_parameters()) out.push_back(p);
        return out;
    }

    /// Everything that is serialized: autoencoder parameters plus Θ.
    std::vector<NamedParameter> all_parameters() {
        auto out = parameters();
        out.push_back({"cluster.theta", &cluster.theta});
        return out;
    }

    std::vector<NamedBuffer> buffers() {
        std::vector<NamedBuffer> out;
        for (std::size_t i = 0; i < encoder_.size(); ++i) encoder_[i].buffers("encoder.block" + std::to_string(i), out);
        for (std::size_t i = 0; i < decoder_.size(); ++i) decoder_[i].buffers("decoder.block" + std::to_string(i), out);
        return out;
    }

    std::vector<StgcnBlock>& encoder_blocks() noexcept { return encoder_; }
    std::vector<StgcnBlock>& decoder_blocks() noexcept { return decoder_; }

    ClusteringLayer cluster;

private:
    SagcConfig sagc_config() const {
        SagcConfig s;
        s.branches = cfg_.branches;
        s.attention_channels = cfg_.attention_channels;
        s.per_frame_attention = cfg_.per_frame_attention;
        s.init = cfg_.init;
        return s;
    }

    ModelConfig cfg_;
    Var adjacency_;
    std::vector<StgcnBlock> encoder_, decoder_;
    Parameter enc_w_, enc_b_, dec_w_, dec_b_, out_w_, out_b_;
};

/// Mean squared error over all elements.
inline Var reconstruction_loss(const Var& x_hat, const Tensor& x) { return ops::mse(x_hat, x); }

}  // namespace gepc
