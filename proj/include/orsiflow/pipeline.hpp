// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <utility>

#include "orsiflow/checkpoint.hpp"
#include "orsiflow/config.hpp"
#include "orsiflow/encoder.hpp"
#include "orsiflow/flow.hpp"
#include "orsiflow/guidance.hpp"
#include "orsiflow/vae.hpp"

namespace orsiflow {

struct ModelConfig {
    EncoderConfig enc;
    GuidanceConfig guid;
    VaeConfig vae;
    VelocityConfig vel;
};

inline ModelConfig model_config_from(const RunConfig& rc) {
    ModelConfig mc;
    mc.enc.channels = rc.enc_channels;
    mc.enc.heads = rc.enc_heads;
    mc.enc.sr = rc.enc_sr;
    mc.enc.time_dim = rc.enc_time_dim;
    mc.enc.mlp_ratio = rc.enc_mlp_ratio;
    mc.guid.sfd_enabled = rc.sfd_enabled;
    mc.guid.sfc_enabled = rc.sfc_enabled;
    mc.guid.strict_eq10 = rc.sfc_strict_eq10;
    mc.vae.downsample = rc.vae_downsample;
    mc.vae.latent_channels = rc.vae_latent_channels;
    mc.vae.hidden = rc.vae_hidden;
    mc.vae.beta_kl = rc.vae_beta_kl;
    mc.vel.width = rc.velocity_width;
    mc.vel.blocks = rc.velocity_blocks;
    mc.vel.time_dim = rc.enc_time_dim;
    return mc;
}

/// The full pipeline: conditional encoder + guidance + frozen VAE +
/// velocity net, sharing one parameter store. Parameter initialization is a
/// pure function of the seed, so two models built alike are bit-identical.
class OrsiFlowModel {
public:
    OrsiFlowModel(const ModelConfig& cfg, uint64_t seed)
        : cfg_(cfg),
          init_rng_(Rng::derive(seed, 0x1)),
          encoder_(params_, cfg.enc, init_rng_),
          guidance_(params_, cfg.enc.channels, cfg.guid, init_rng_),
          vae_(params_, cfg.vae, init_rng_),
          velocity_(params_, cfg.vel, cfg.enc.channels, cfg.vae.latent_channels, init_rng_) {}

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const ModelConfig& config() const { return cfg_; }
    ConditionalEncoder& encoder() { return encoder_; }
    SaliencyGuidance& guidance() { return guidance_; }
    TinyVae& vae() { return vae_; }
    VelocityNet& velocity_net() { return velocity_; }

    void freeze_vae() {
        params_.set_trainable("vae.", false);
        vae_frozen_ = true;
    }
    bool vae_frozen() const { return vae_frozen_; }

    /// RMS of the frozen posterior means; the flow transports mu / scale.
    void set_latent_scale(double s) {
        if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("latent scale must be positive and finite");
        latent_scale_ = s;
    }
    double latent_scale() const { return latent_scale_; }

    Shape latent_shape(int h, int w) const {
        return {cfg_.vae.latent_channels, h / cfg_.vae.downsample, w / cfg_.vae.downsample};
    }

    ConditionBundle condition(const Tensor& image, const Tensor& noisy_mask, double t) const {
        return guidance_.forward(encoder_.forward(image, noisy_mask, t));
    }

    /// One rectified-flow training example: sample t ~ U(0,1) and eps, build
    /// z_t on the linear path, condition on the decoded pixel state, and
    /// score the predicted velocity against (eps - z_0). The VAE runs
    /// grad-free; z_0 is the posterior mean.
    Tensor train_loss(const Tensor& image, const Tensor& mask, Rng& rng) const {
        Tensor z0, eps, zt, xt;
        double t;
        {
            NoGrad ng;
            auto [mu, logvar] = vae_.encode(mask);
            (void)logvar;
            z0 = mul_scalar(mu, 1.0 / latent_scale_);
            eps = Tensor::randn(z0.shape(), rng);
            t = rng.uniform();
            zt = interpolate_state(z0, eps, t);
            xt = vae_.decode(mul_scalar(zt, latent_scale_));
        }
        const ConditionBundle cond = condition(image, xt, t);
        const Tensor v = velocity_.forward(zt, t, cond);
        return rf_loss(v, z0, eps);
    }

    /// Deterministic few-step prediction. The initial noise comes from
    /// `noise_seed`; conditioning follows `mode` (decode the current latent
    /// each step, or compute the conditions once at t = 1 from a 0.5 map).
    Tensor predict(const Tensor& image, int steps, uint64_t noise_seed, ConditionMode mode,
                   std::vector<Tensor>* trajectory = nullptr) const {
        NoGrad ng;
        const int h = image.dim(1), w = image.dim(2);
        Rng noise_rng(noise_seed);
        const Tensor start = Tensor::randn(latent_shape(h, w), noise_rng);
        ConditionBundle once;
        if (mode == ConditionMode::Once) once = condition(image, Tensor::full({1, h, w}, 0.5), 1.0);
        auto vel = [&](const Tensor& z, double t) {
            if (mode == ConditionMode::Once) return velocity_.forward(z, t, once);
            const Tensor xt = vae_.decode(mul_scalar(z, latent_scale_));
            return velocity_.forward(z, t, condition(image, xt, t));
        };
        const Tensor z_hat = euler_sample(start, steps, vel, trajectory);
        return vae_.decode(mul_scalar(z_hat, latent_scale_));
    }

    void save(const std::filesystem::path& path, std::map<std::string, std::string> extra_meta = {}) const {
        extra_meta["frozen"] = vae_frozen_ ? "1" : "0";
        char scale_str[32];
        std::snprintf(scale_str, sizeof(scale_str), "%.17g", latent_scale_);
        extra_meta["latent_scale"] = scale_str;
        save_checkpoint(params_, path, extra_meta);
    }

    std::map<std::string, std::string> load(const std::filesystem::path& path) {
        auto meta = load_checkpoint(params_, path);
        auto it = meta.find("frozen");
        if (it != meta.end() && it->second == "1") freeze_vae();
        it = meta.find("latent_scale");
        if (it != meta.end()) set_latent_scale(std::stod(it->second));
        return meta;
    }

private:
    ModelConfig cfg_;
    ParamStore params_;
    Rng init_rng_;
    ConditionalEncoder encoder_;
    SaliencyGuidance guidance_;
    TinyVae vae_;
    VelocityNet velocity_;
    bool vae_frozen_ = false;
    double latent_scale_ = 1.0;
};

} // namespace orsiflow
