// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "orsiflow/encoder.hpp"
#include "orsiflow/guidance.hpp"
#include "orsiflow/nn.hpp"
#include "orsiflow/ops.hpp"

namespace orsiflow {

// Time convention: t = 0 is data, t = 1 is noise. Sampling integrates the
// velocity ODE from t = 1 down to 0 on a uniform grid.

/// z_t = (1 - t) * z_0 + t * eps.
inline Tensor interpolate_state(const Tensor& z0, const Tensor& eps, double t) {
    if (t < 0.0 || t > 1.0) throw OutOfRange("interpolate_state: t must lie in [0,1], got " + std::to_string(t));
    if (z0.shape() != eps.shape())
        throw ShapeMismatch("interpolate_state: " + shape_str(z0.shape()) + " vs " + shape_str(eps.shape()));
    return add(mul_scalar(z0, 1.0 - t), mul_scalar(eps, t));
}

/// Rectified-flow objective: mean squared error between the predicted
/// velocity and the target direction (eps - z_0), averaged over elements.
inline Tensor rf_loss(const Tensor& v_pred, const Tensor& z0, const Tensor& eps) {
    if (z0.shape() != eps.shape() || v_pred.shape() != z0.shape())
        throw ShapeMismatch("rf_loss operands must share one shape");
    return mse_mean(v_pred, sub(eps, z0));
}

/// Euler integration of dz/dt = v(z, t) from t = 1 to t = 0 in K uniform
/// steps, starting at the noise sample. `velocity` is any callable
/// (z, t) -> Tensor. Appends every visited state to `trajectory` when given
/// (K + 1 entries including the start).
template <typename VelocityFn>
Tensor euler_sample(const Tensor& noise, int steps, VelocityFn&& velocity, std::vector<Tensor>* trajectory = nullptr) {
    if (steps < 1) throw OutOfRange("euler_sample requires K >= 1");
    Tensor z = noise;
    if (trajectory) trajectory->push_back(z);
    const double dt = 1.0 / steps;
    for (int k = steps; k >= 1; --k) {
        const double t = static_cast<double>(k) / steps;
        const Tensor v = velocity(z, t);
        z = sub(z, mul_scalar(v, dt));
        if (!all_finite(z))
            throw NonFiniteState("euler_sample produced a non-finite state at t=" + std::to_string(t));
        if (trajectory) trajectory->push_back(z);
    }
    return z;
}

/// Mean squared perpendicular deviation of intermediate states from the
/// endpoint chord, normalized by the squared chord length. Zero for exactly
/// rectified (straight) trajectories.
inline double straightness(const std::vector<Tensor>& trajectory) {
    if (trajectory.size() < 2) throw DegenerateTrajectory("straightness needs at least two states");
    const Tensor& a = trajectory.front();
    const Tensor& b = trajectory.back();
    const size_t n = a.values().size();
    double chord2 = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = b.data()[i] - a.data()[i];
        chord2 += d * d;
    }
    if (chord2 == 0.0) throw DegenerateTrajectory("straightness: trajectory endpoints coincide");
    if (trajectory.size() == 2) return 0.0;
    double acc = 0.0;
    for (size_t k = 1; k + 1 < trajectory.size(); ++k) {
        const Tensor& z = trajectory[k];
        double dot = 0.0;
        for (size_t i = 0; i < n; ++i) dot += (z.data()[i] - a.data()[i]) * (b.data()[i] - a.data()[i]);
        const double proj = dot / chord2;
        double perp2 = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double d = (z.data()[i] - a.data()[i]) - proj * (b.data()[i] - a.data()[i]);
            perp2 += d * d;
        }
        acc += perp2;
    }
    return acc / (static_cast<double>(trajectory.size() - 2) * chord2);
}

struct VelocityConfig {
    int width = 64;
    int blocks = 4;
    int time_dim = 32;
};

/// Conv stack over the latent. Conditional features enter as summed
/// 1x1-projected, bilinearly resized maps at the stem; the time embedding
/// enters as a stem bias plus per-block channel scale/shift modulation (the
/// target field behaves like (z_t - z_0)/t, so blocks need multiplicative
/// control by t, not just an additive bias).
class VelocityNet {
public:
    VelocityNet(ParamStore& ps, VelocityConfig cfg, const std::array<int, 4>& cond_channels, int latent_channels,
                Rng& rng)
        : cfg_(cfg), latent_channels_(latent_channels) {
        stem_w_ = ps.conv_param("vel.stem.w", cfg_.width, latent_channels, 3, rng);
        stem_b_ = ps.zeros_param("vel.stem.b", {cfg_.width});
        for (int n = 0; n < 4; ++n) {
            const std::string p = "vel.cond" + std::to_string(n + 1);
            cond_w_[static_cast<size_t>(n)] =
                ps.conv_param(p + ".w", cfg_.width, cond_channels[static_cast<size_t>(n)], 1, rng);
            cond_b_[static_cast<size_t>(n)] = ps.zeros_param(p + ".b", {cfg_.width});
            // encoder/guidance features arrive at uncontrolled scale; the
            // latent path is unit-scale, so normalize before summing
            cond_ln_g_[static_cast<size_t>(n)] = ps.ones_param(p + ".ln.g", {cfg_.width});
            cond_ln_b_[static_cast<size_t>(n)] = ps.zeros_param(p + ".ln.b", {cfg_.width});
        }
        time_w_ = ps.linear_param("vel.time.w", cfg_.time_dim, cfg_.width, rng);
        time_b_ = ps.zeros_param("vel.time.b", {cfg_.width});
        time_hidden_w_ = ps.linear_param("vel.time_mlp.w", cfg_.time_dim, cfg_.time_dim, rng);
        time_hidden_b_ = ps.zeros_param("vel.time_mlp.b", {cfg_.time_dim});
        for (int i = 0; i < cfg_.blocks; ++i) {
            const std::string p = "vel.block" + std::to_string(i);
            block_w_.push_back(ps.conv_param(p + ".w", cfg_.width, cfg_.width, 3, rng));
            block_b_.push_back(ps.zeros_param(p + ".b", {cfg_.width}));
            // zero-init modulation: blocks start as plain residual convs
            film_w_.push_back(ps.zeros_param(p + ".film.w", {cfg_.time_dim, 2 * cfg_.width}));
            film_b_.push_back(ps.zeros_param(p + ".film.b", {2 * cfg_.width}));
        }
        // Zero output head: the field starts at v = 0 and the first loss is
        // the plain E||eps - z0||^2 baseline.
        out_w_ = ps.zeros_param("vel.out.w", {latent_channels, cfg_.width, 3, 3});
        out_b_ = ps.zeros_param("vel.out.b", {latent_channels});
    }

    const VelocityConfig& config() const { return cfg_; }

    Tensor forward(const Tensor& z, double t, const ConditionBundle& cond) const {
        if (z.ndim() != 3 || z.dim(0) != latent_channels_)
            throw ShapeMismatch("velocity net expects latent [" + std::to_string(latent_channels_) + ",h,w], got " +
                                shape_str(z.shape()));
        const int h = z.dim(1), w = z.dim(2);
        Tensor acc = conv2d(z, stem_w_, stem_b_, 1, 1);
        for (int n = 0; n < 4; ++n) {
            const auto i = static_cast<size_t>(n);
            const Tensor proj = conv2d(cond.cond[i], cond_w_[i], cond_b_[i], 1, 0);
            const int ph = proj.dim(1), pw = proj.dim(2);
            const Tensor tokens = transpose(reshape(proj, {cfg_.width, ph * pw}));
            const Tensor normed = layer_norm_rows(tokens, cond_ln_g_[i], cond_ln_b_[i]);
            const Tensor back = reshape(transpose(normed), {cfg_.width, ph, pw});
            acc = add(acc, resize_bilinear(back, h, w));
        }
        const Tensor tvec = reshape(time_embed(t, cfg_.time_dim), {1, cfg_.time_dim});
        const Tensor tb = reshape(linear(tvec, time_w_, time_b_), {cfg_.width});
        const Tensor thid = relu(linear(tvec, time_hidden_w_, time_hidden_b_));
        Tensor hid = relu(add_channel_bias(acc, tb));
        for (size_t i = 0; i < block_w_.size(); ++i) {
            const Tensor mod = reshape(linear(thid, film_w_[i], film_b_[i]), {2 * cfg_.width});
            const auto ss = split(mod, 2, 0);
            Tensor blk = relu(conv2d(hid, block_w_[i], block_b_[i], 1, 1));
            blk = add_channel_bias(mul_channel_gain(blk, add_scalar(ss[0], 1.0)), ss[1]);
            hid = add(hid, blk);
        }
        return conv2d(hid, out_w_, out_b_, 1, 1);
    }

private:
    VelocityConfig cfg_;
    int latent_channels_;
    Tensor stem_w_, stem_b_;
    std::array<Tensor, 4> cond_w_, cond_b_, cond_ln_g_, cond_ln_b_;
    Tensor time_w_, time_b_;
    Tensor time_hidden_w_, time_hidden_b_;
    std::vector<Tensor> block_w_, block_b_;
    std::vector<Tensor> film_w_, film_b_;
    Tensor out_w_, out_b_;
};

} // namespace orsiflow
