// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <string>

#include "orsiflow/nn.hpp"
#include "orsiflow/ops.hpp"

namespace orsiflow {

/// Sinusoidal time embedding: T[2i] = sin(tau * w_i), T[2i+1] = cos(tau * w_i)
/// with w_i = 10000^(-2i/d) and tau = 1000 * t, so t in [0,1] spans the
/// classic positional-encoding frequency range.
inline Tensor time_embed(double t, int d) {
    if (t < 0.0 || t > 1.0) throw OutOfRange("time_embed: t must lie in [0,1], got " + std::to_string(t));
    if (d < 2 || d % 2 != 0) throw ShapeMismatch("time_embed: width must be even and >= 2");
    std::vector<double> v(static_cast<size_t>(d));
    const double tau = 1000.0 * t;
    for (int i = 0; i < d / 2; ++i) {
        const double w = std::pow(10000.0, -2.0 * i / d);
        v[static_cast<size_t>(2 * i)] = std::sin(tau * w);
        v[static_cast<size_t>(2 * i + 1)] = std::cos(tau * w);
    }
    return Tensor::from({d}, std::move(v));
}

struct EncoderConfig {
    std::array<int, 4> channels{16, 32, 64, 128};
    std::array<int, 4> heads{1, 2, 4, 8};
    std::array<int, 4> sr{4, 2, 1, 1}; // K/V spatial reduction per stage
    int time_dim = 32;
    int mlp_ratio = 2;
};

/// Four-stage pyramid encoder over (image, noisy mask, t). Stage n halves
/// resolution (stage 1 divides by 4): outputs land at H/4, H/8, H/16, H/32.
/// Each stage is a strided patch embedding, a second 3x3 projection, and one
/// spatial-reduction attention + MLP block with the time embedding injected
/// as a learned per-channel bias before attention.
class ConditionalEncoder {
public:
    ConditionalEncoder(ParamStore& ps, EncoderConfig cfg, Rng& rng) : cfg_(cfg) {
        for (int n = 0; n < 4; ++n) {
            if (cfg_.channels[static_cast<size_t>(n)] % cfg_.heads[static_cast<size_t>(n)] != 0)
                throw ConfigError("encoder heads must divide stage channels");
        }
        for (int n = 0; n < 4; ++n) {
            const int c = cfg_.channels[static_cast<size_t>(n)];
            const std::string p = "enc.s" + std::to_string(n + 1) + ".";
            auto& s = stages_[static_cast<size_t>(n)];
            if (n == 0) {
                s.img_w = ps.conv_param(p + "img.w", c, 3, 4, rng);
                s.img_b = ps.zeros_param(p + "img.b", {c});
                s.mask_w = ps.conv_param(p + "mask.w", c, 1, 4, rng);
                s.mask_b = ps.zeros_param(p + "mask.b", {c});
            } else {
                const int cin = cfg_.channels[static_cast<size_t>(n - 1)];
                s.patch_w = ps.conv_param(p + "patch.w", c, cin, 4, rng);
                s.patch_b = ps.zeros_param(p + "patch.b", {c});
            }
            s.embed_w = ps.conv_param(p + "embed.w", c, c, 3, rng);
            s.embed_b = ps.zeros_param(p + "embed.b", {c});
            s.time_w = ps.linear_param(p + "time.w", cfg_.time_dim, c, rng);
            s.time_b = ps.zeros_param(p + "time.b", {c});
            s.ln1_g = ps.ones_param(p + "ln1.g", {c});
            s.ln1_b = ps.zeros_param(p + "ln1.b", {c});
            s.ln2_g = ps.ones_param(p + "ln2.g", {c});
            s.ln2_b = ps.zeros_param(p + "ln2.b", {c});
            s.q_w = ps.linear_param(p + "attn.q.w", c, c, rng);
            s.q_b = ps.zeros_param(p + "attn.q.b", {c});
            s.k_w = ps.linear_param(p + "attn.k.w", c, c, rng);
            s.k_b = ps.zeros_param(p + "attn.k.b", {c});
            s.v_w = ps.linear_param(p + "attn.v.w", c, c, rng);
            s.v_b = ps.zeros_param(p + "attn.v.b", {c});
            s.o_w = ps.linear_param(p + "attn.o.w", c, c, rng);
            s.o_b = ps.zeros_param(p + "attn.o.b", {c});
            const int hidden = c * cfg_.mlp_ratio;
            s.mlp1_w = ps.linear_param(p + "mlp1.w", c, hidden, rng);
            s.mlp1_b = ps.zeros_param(p + "mlp1.b", {hidden});
            s.mlp2_w = ps.linear_param(p + "mlp2.w", hidden, c, rng);
            s.mlp2_b = ps.zeros_param(p + "mlp2.b", {c});
        }
    }

    const EncoderConfig& config() const { return cfg_; }

    /// Stage-wise embedding: stage 1 fuses image and mask projections at
    /// stride 4; later stages re-project the previous stage at stride 2.
    Tensor stage_embed(const Tensor& image, const Tensor& noisy_mask, const Tensor* prev, int n) const {
        if (n < 1 || n > 4) throw OutOfRange("stage index must be 1..4");
        const auto& s = stages_[static_cast<size_t>(n - 1)];
        Tensor p;
        if (n == 1) {
            if (prev) throw ShapeMismatch("stage 1 takes no previous feature");
            if (image.ndim() != 3 || image.dim(0) != 3)
                throw ShapeMismatch("stage 1 expects an RGB image [3,H,W], got " + shape_str(image.shape()));
            if (noisy_mask.ndim() != 3 || noisy_mask.dim(0) != 1)
                throw ShapeMismatch("stage 1 expects a mask [1,H,W], got " + shape_str(noisy_mask.shape()));
            if (image.dim(1) != noisy_mask.dim(1) || image.dim(2) != noisy_mask.dim(2))
                throw ShapeMismatch("image " + shape_str(image.shape()) + " and mask " +
                                    shape_str(noisy_mask.shape()) + " resolutions differ");
            p = add(conv2d(image, s.img_w, s.img_b, 4, 0), conv2d(noisy_mask, s.mask_w, s.mask_b, 4, 0));
        } else {
            if (!prev) throw ShapeMismatch("stage " + std::to_string(n) + " requires the previous stage feature");
            p = conv2d(*prev, s.patch_w, s.patch_b, 2, 1);
        }
        return conv2d(p, s.embed_w, s.embed_b, 1, 1);
    }

    /// Full pass: {F_n} at H/4, H/8, H/16, H/32 resolutions, t-aware.
    std::array<Tensor, 4> forward(const Tensor& image, const Tensor& noisy_mask, double t) const {
        if (image.dim(1) % 32 != 0 || image.dim(2) % 32 != 0)
            throw ShapeMismatch("encoder input size must be divisible by 32, got " + shape_str(image.shape()));
        const Tensor T = time_embed(t, cfg_.time_dim);
        std::array<Tensor, 4> out;
        Tensor x;
        for (int n = 1; n <= 4; ++n) {
            Tensor e = stage_embed(image, noisy_mask, n == 1 ? nullptr : &x, n);
            x = block(e, T, n - 1);
            out[static_cast<size_t>(n - 1)] = x;
        }
        return out;
    }

private:
    struct StageParams {
        Tensor img_w, img_b, mask_w, mask_b; // stage 1 only
        Tensor patch_w, patch_b;             // stages 2..4
        Tensor embed_w, embed_b;
        Tensor time_w, time_b;
        Tensor ln1_g, ln1_b, ln2_g, ln2_b;
        Tensor q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
        Tensor mlp1_w, mlp1_b, mlp2_w, mlp2_b;
    };

    Tensor block(const Tensor& x_in, const Tensor& T, int idx) const {
        const auto& s = stages_[static_cast<size_t>(idx)];
        const int C = x_in.dim(0), H = x_in.dim(1), W = x_in.dim(2);
        const int heads = cfg_.heads[static_cast<size_t>(idx)];
        const int sr = cfg_.sr[static_cast<size_t>(idx)];

        const Tensor tb = reshape(linear(reshape(T, {1, cfg_.time_dim}), s.time_w, s.time_b), {C});
        const Tensor x = add_channel_bias(x_in, tb);

        const Tensor tokens = transpose(reshape(x, {C, H * W})); // [N,C]
        const Tensor normed = layer_norm_rows(tokens, s.ln1_g, s.ln1_b);
        const Tensor q = linear(normed, s.q_w, s.q_b);
        Tensor kv_src = normed;
        if (sr > 1) {
            const Tensor map = reshape(transpose(normed), {C, H, W});
            const Tensor red = avg_pool2d(map, sr);
            kv_src = transpose(reshape(red, {C, (H / sr) * (W / sr)}));
        }
        const Tensor k = linear(kv_src, s.k_w, s.k_b);
        const Tensor v = linear(kv_src, s.v_w, s.v_b);

        const int dh = C / heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        std::vector<Tensor> head_out;
        const auto qs = heads > 1 ? split(q, heads, 1) : std::vector<Tensor>{q};
        const auto ks = heads > 1 ? split(k, heads, 1) : std::vector<Tensor>{k};
        const auto vs = heads > 1 ? split(v, heads, 1) : std::vector<Tensor>{v};
        head_out.reserve(static_cast<size_t>(heads));
        for (int h = 0; h < heads; ++h) {
            const auto hi = static_cast<size_t>(h);
            const Tensor scores = mul_scalar(matmul(qs[hi], transpose(ks[hi])), scale);
            head_out.push_back(matmul(softmax_rows(scores), vs[hi]));
        }
        const Tensor attn = linear(heads > 1 ? concat(head_out, 1) : head_out[0], s.o_w, s.o_b);
        const Tensor x1 = add(tokens, attn);

        const Tensor mlp_in = layer_norm_rows(x1, s.ln2_g, s.ln2_b);
        const Tensor hidden = relu(linear(mlp_in, s.mlp1_w, s.mlp1_b));
        const Tensor x2 = add(x1, linear(hidden, s.mlp2_w, s.mlp2_b));
        return reshape(transpose(x2), {C, H, W});
    }

    EncoderConfig cfg_;
    std::array<StageParams, 4> stages_;
};

} // namespace orsiflow
