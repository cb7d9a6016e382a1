// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "orsiflow/nn.hpp"
#include "orsiflow/ops.hpp"

namespace orsiflow {

struct VaeConfig {
    int downsample = 8;      // power of two; one stride-2 stage per factor of 2
    int latent_channels = 4;
    std::vector<int> hidden{16, 32, 64}; // one width per encoder stage
    double beta_kl = 1e-4;
};

/// Tiny convolutional VAE over single-channel masks. Pretrained on masks and
/// frozen before flow training; the flow transports its posterior means.
class TinyVae {
public:
    TinyVae(ParamStore& ps, VaeConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
        int stages = 0;
        for (int f = cfg_.downsample; f > 1; f /= 2) {
            if (f % 2 != 0) throw ConfigError("vae downsample must be a power of two");
            ++stages;
        }
        if (static_cast<int>(cfg_.hidden.size()) != stages)
            throw ConfigError("vae hidden widths must list one width per stride-2 stage (" + std::to_string(stages) +
                              ")");
        int cin = 1;
        for (int i = 0; i < stages; ++i) {
            const int cout = cfg_.hidden[static_cast<size_t>(i)];
            enc_w_.push_back(ps.conv_param("vae.enc" + std::to_string(i) + ".w", cout, cin, 4, rng));
            enc_b_.push_back(ps.zeros_param("vae.enc" + std::to_string(i) + ".b", {cout}));
            cin = cout;
        }
        mu_w_ = ps.conv_param("vae.mu.w", cfg_.latent_channels, cin, 3, rng);
        mu_b_ = ps.zeros_param("vae.mu.b", {cfg_.latent_channels});
        logvar_w_ = ps.conv_param("vae.logvar.w", cfg_.latent_channels, cin, 3, rng);
        logvar_b_ = ps.zeros_param("vae.logvar.b", {cfg_.latent_channels});

        dec_in_w_ = ps.conv_param("vae.dec_in.w", cin, cfg_.latent_channels, 3, rng);
        dec_in_b_ = ps.zeros_param("vae.dec_in.b", {cin});
        for (int i = stages - 1; i >= 0; --i) {
            const int cout = i > 0 ? cfg_.hidden[static_cast<size_t>(i - 1)] : 1;
            const int cfrom = cfg_.hidden[static_cast<size_t>(i)];
            dec_w_.push_back(ps.conv_param("vae.dec" + std::to_string(i) + ".w", cout, cfrom, 3, rng));
            dec_b_.push_back(ps.zeros_param("vae.dec" + std::to_string(i) + ".b", {cout}));
        }
    }

    const VaeConfig& config() const { return cfg_; }

    /// x [1,H,W] -> (mu, logvar), each [c_z, H/f, W/f]. Deterministic.
    std::pair<Tensor, Tensor> encode(const Tensor& x) const {
        if (x.ndim() != 3 || x.dim(0) != 1)
            throw ShapeMismatch("vae_encode expects [1,H,W], got " + shape_str(x.shape()));
        if (x.dim(1) % cfg_.downsample != 0 || x.dim(2) % cfg_.downsample != 0)
            throw ShapeMismatch("vae input size must be divisible by " + std::to_string(cfg_.downsample));
        Tensor h = x;
        for (size_t i = 0; i < enc_w_.size(); ++i) h = relu(conv2d(h, enc_w_[i], enc_b_[i], 2, 1));
        return {conv2d(h, mu_w_, mu_b_, 1, 1), conv2d(h, logvar_w_, logvar_b_, 1, 1)};
    }

    /// z = mu + exp(0.5 * logvar) * noise.
    static Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& noise) {
        if (mu.shape() != logvar.shape() || mu.shape() != noise.shape())
            throw ShapeMismatch("reparameterize operands must share one shape");
        return add(mu, mul(exp_op(mul_scalar(logvar, 0.5)), noise));
    }

    Tensor decode_logits(const Tensor& z) const {
        if (z.ndim() != 3 || z.dim(0) != cfg_.latent_channels)
            throw ShapeMismatch("vae_decode expects [" + std::to_string(cfg_.latent_channels) + ",h,w], got " +
                                shape_str(z.shape()));
        Tensor h = relu(conv2d(z, dec_in_w_, dec_in_b_, 1, 1));
        for (size_t i = 0; i < dec_w_.size(); ++i) {
            h = resize_bilinear(h, h.dim(1) * 2, h.dim(2) * 2);
            h = conv2d(h, dec_w_[i], dec_b_[i], 1, 1);
            if (i + 1 < dec_w_.size()) h = relu(h);
        }
        return h;
    }

    /// Decoded mask in (0,1) through the sigmoid head.
    Tensor decode(const Tensor& z) const { return sigmoid(decode_logits(z)); }

    /// KL(N(mu, sigma) || N(0, I)) averaged over latent elements.
    static Tensor kl_divergence(const Tensor& mu, const Tensor& logvar) {
        const Tensor per_elem = sub(add(mul(mu, mu), exp_op(logvar)), add_scalar(logvar, 1.0));
        return mul_scalar(mean_all(per_elem), 0.5);
    }

    struct Loss {
        Tensor total, recon, kl;
    };

    /// One training objective: mean BCE reconstruction + beta_KL * KL.
    Loss loss(const Tensor& mask, Rng& rng) const {
        auto [mu, logvar] = encode(mask);
        Tensor noise;
        {
            NoGrad ng;
            noise = Tensor::randn(mu.shape(), rng);
        }
        const Tensor z = reparameterize(mu, logvar, noise);
        const Tensor recon = bce_with_logits_mean(decode_logits(z), mask);
        const Tensor kl = kl_divergence(mu, logvar);
        return {add(recon, mul_scalar(kl, cfg_.beta_kl)), recon, kl};
    }

private:
    VaeConfig cfg_;
    std::vector<Tensor> enc_w_, enc_b_;
    Tensor mu_w_, mu_b_, logvar_w_, logvar_b_;
    Tensor dec_in_w_, dec_in_b_;
    std::vector<Tensor> dec_w_, dec_b_;
};

} // namespace orsiflow
