// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "orsiflow/flow.hpp"
#include "orsiflow/gradcheck.hpp"
#include "orsiflow/pipeline.hpp"

namespace orsiflow {

/// Finite-difference coverage of every differentiable op plus the composed
/// modules (encoder stage stack, SFD, SFC, velocity net, VAE), at small
/// random shapes. Used by the gradcheck command and the acceptance suite.
inline std::vector<GradCheckResult> run_gradcheck_suite(uint64_t seed = 7, double h = 1e-5, double tol = 1e-4) {
    std::vector<GradCheckResult> out;
    Rng rng(seed);

    // Random probe head makes d(loss)/d(op output) a generic vector.
    auto probe = [&rng](const Tensor& y) {
        Tensor c = Tensor::randn(y.shape(), rng);
        return sum_all(mul(y, c));
    };

    using Fn = std::function<Tensor(const std::vector<Tensor>&)>;
    auto check = [&](const std::string& name, Fn f, std::vector<Tensor> inputs) {
        out.push_back(gradcheck(name, f, std::move(inputs), h, tol));
    };

    // --- elementwise and scalar ops ---
    {
        Tensor a = Tensor::randn({3, 5}, rng), b = Tensor::randn({3, 5}, rng);
        Tensor c = Tensor::randn({3, 5}, rng);
        check("add", [c](const std::vector<Tensor>& in) { return sum_all(mul(add(in[0], in[1]), c)); }, {a, b});
        check("sub", [c](const std::vector<Tensor>& in) { return sum_all(mul(sub(in[0], in[1]), c)); }, {a, b});
        check("mul", [c](const std::vector<Tensor>& in) { return sum_all(mul(mul(in[0], in[1]), c)); }, {a, b});
        check("add_scalar", [c](const std::vector<Tensor>& in) { return sum_all(mul(add_scalar(in[0], 0.7), c)); }, {a});
        check("mul_scalar", [c](const std::vector<Tensor>& in) { return sum_all(mul(mul_scalar(in[0], -1.3), c)); }, {a});
        check("scale_by", [c](const std::vector<Tensor>& in) { return sum_all(mul(scale_by(in[0], in[1]), c)); },
              {a, Tensor::randn({1}, rng)});
        check("shift_by", [c](const std::vector<Tensor>& in) { return sum_all(mul(shift_by(in[0], in[1]), c)); },
              {a, Tensor::randn({1}, rng)});
        check("activation.sigmoid",
              [c](const std::vector<Tensor>& in) { return sum_all(mul(sigmoid(in[0]), c)); }, {a});
        check("activation.tanh", [c](const std::vector<Tensor>& in) { return sum_all(mul(tanh_act(in[0]), c)); }, {a});
        // keep relu inputs away from the kink at 0
        Tensor ar = Tensor::randn({3, 5}, rng);
        for (auto& v : ar.values()) v += v >= 0.0 ? 0.5 : -0.5;
        check("activation.relu", [c](const std::vector<Tensor>& in) { return sum_all(mul(relu(in[0]), c)); }, {ar});
        check("exp", [c](const std::vector<Tensor>& in) { return sum_all(mul(exp_op(in[0]), c)); }, {a});
    }

    // --- matrix ops ---
    {
        Tensor a = Tensor::randn({4, 6}, rng), b = Tensor::randn({6, 3}, rng);
        Tensor c = Tensor::randn({4, 3}, rng);
        check("matmul", [c](const std::vector<Tensor>& in) { return sum_all(mul(matmul(in[0], in[1]), c)); }, {a, b});
        Tensor ct = Tensor::randn({6, 4}, rng);
        check("transpose", [ct](const std::vector<Tensor>& in) { return sum_all(mul(transpose(in[0]), ct)); }, {a});
        Tensor bias = Tensor::randn({3}, rng);
        check("linear", [c](const std::vector<Tensor>& in) { return sum_all(mul(linear(in[0], in[1], in[2]), c)); },
              {a, b, bias});
    }

    // --- conv and pooling ---
    {
        Tensor x = Tensor::randn({3, 6, 6}, rng);
        Tensor w = Tensor::randn({4, 3, 3, 3}, rng);
        Tensor b = Tensor::randn({4}, rng);
        Tensor c = Tensor::randn({4, 6, 6}, rng);
        check("conv2d.s1p1",
              [c](const std::vector<Tensor>& in) { return sum_all(mul(conv2d(in[0], in[1], in[2], 1, 1), c)); },
              {x, w, b});
        Tensor w4 = Tensor::randn({2, 3, 4, 4}, rng);
        Tensor b4 = Tensor::randn({2}, rng);
        Tensor c4 = Tensor::randn({2, 3, 3}, rng);
        check("conv2d.s2p1",
              [c4](const std::vector<Tensor>& in) { return sum_all(mul(conv2d(in[0], in[1], in[2], 2, 1), c4)); },
              {x, w4, b4});
        Tensor w1 = Tensor::randn({5, 3, 1, 1}, rng);
        Tensor b1 = Tensor::randn({5}, rng);
        Tensor c1 = Tensor::randn({5, 6, 6}, rng);
        check("conv2d.k1",
              [c1](const std::vector<Tensor>& in) { return sum_all(mul(conv2d(in[0], in[1], in[2], 1, 0), c1)); },
              {x, w1, b1});
        Tensor cc = Tensor::randn({3}, rng);
        check("pool_global.avg",
              [cc](const std::vector<Tensor>& in) { return sum_all(mul(pool_global(in[0], PoolMode::Avg), cc)); }, {x});
        check("pool_global.max",
              [cc](const std::vector<Tensor>& in) { return sum_all(mul(pool_global(in[0], PoolMode::Max), cc)); }, {x});
        Tensor cp = Tensor::randn({3, 3, 3}, rng);
        check("avg_pool2d",
              [cp](const std::vector<Tensor>& in) { return sum_all(mul(avg_pool2d(in[0], 2), cp)); }, {x});
        Tensor cb = Tensor::randn({3, 6, 6}, rng);
        check("add_channel_bias",
              [cb](const std::vector<Tensor>& in) { return sum_all(mul(add_channel_bias(in[0], in[1]), cb)); },
              {x, Tensor::randn({3}, rng)});
        check("mul_channel_gain",
              [cb](const std::vector<Tensor>& in) { return sum_all(mul(mul_channel_gain(in[0], in[1]), cb)); },
              {x, Tensor::randn({3}, rng)});
        Tensor xr = Tensor::randn({4, 5}, rng);
        Tensor cr = Tensor::randn({4, 5}, rng);
        check("add_row_bias",
              [cr](const std::vector<Tensor>& in) { return sum_all(mul(add_row_bias(in[0], in[1]), cr)); },
              {xr, Tensor::randn({5}, rng)});
    }

    // --- shape ops ---
    {
        Tensor a = Tensor::randn({2, 3, 4}, rng), b = Tensor::randn({2, 2, 4}, rng);
        Tensor c = Tensor::randn({2, 5, 4}, rng);
        check("concat",
              [c](const std::vector<Tensor>& in) { return sum_all(mul(concat({in[0], in[1]}, 1), c)); }, {a, b});
        Tensor cs = Tensor::randn({2, 3, 2}, rng);
        check("split",
              [cs](const std::vector<Tensor>& in) { return sum_all(mul(split(in[0], 2, 2)[1], cs)); }, {a});
        Tensor cre = Tensor::randn({6, 4}, rng);
        check("reshape",
              [cre](const std::vector<Tensor>& in) { return sum_all(mul(reshape(in[0], {6, 4}), cre)); }, {a});
        Tensor x = Tensor::randn({2, 4, 4}, rng);
        Tensor cz = Tensor::randn({2, 7, 5}, rng);
        check("resize_bilinear.up",
              [cz](const std::vector<Tensor>& in) { return sum_all(mul(resize_bilinear(in[0], 7, 5), cz)); }, {x});
        Tensor cz2 = Tensor::randn({2, 2, 3}, rng);
        check("resize_bilinear.down",
              [cz2](const std::vector<Tensor>& in) { return sum_all(mul(resize_bilinear(in[0], 2, 3), cz2)); }, {x});
    }

    // --- reductions, losses, row ops ---
    {
        Tensor a = Tensor::randn({4, 6}, rng);
        check("sum_all", [](const std::vector<Tensor>& in) { return sum_all(mul(in[0], in[0])); }, {a});
        check("mean_all", [](const std::vector<Tensor>& in) { return mean_all(mul(in[0], in[0])); }, {a});
        Tensor c = Tensor::randn({4, 6}, rng);
        check("softmax_rows",
              [c](const std::vector<Tensor>& in) { return sum_all(mul(softmax_rows(in[0]), c)); }, {a});
        check("layer_norm_rows",
              [c](const std::vector<Tensor>& in) { return sum_all(mul(layer_norm_rows(in[0], in[1], in[2]), c)); },
              {a, Tensor::randn({6}, rng), Tensor::randn({6}, rng)});
        Tensor target = Tensor::zeros({4, 6});
        for (auto& v : target.values()) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
        check("bce_with_logits_mean",
              [target](const std::vector<Tensor>& in) { return bce_with_logits_mean(in[0], target); }, {a});
        Tensor b = Tensor::randn({4, 6}, rng);
        check("mse_mean", [b](const std::vector<Tensor>& in) { return mse_mean(in[0], b); }, {a});
    }

    // --- composed modules at small shapes ---
    {
        // encoder: all four stages on a 32x32 input, features at 8x8 .. 1x1
        EncoderConfig ec;
        ec.channels = {4, 4, 6, 6};
        ec.heads = {1, 1, 2, 2};
        ec.sr = {2, 2, 1, 1};
        ec.time_dim = 8;
        ec.mlp_ratio = 2;
        ParamStore ps;
        Rng init(Rng::derive(seed, 11));
        ConditionalEncoder enc(ps, ec, init);
        Tensor image = Tensor::randn({3, 32, 32}, rng);
        Tensor mask = Tensor::randn({1, 32, 32}, rng);
        std::vector<Tensor> inputs{image, mask};
        for (const auto& e : ps.entries()) inputs.push_back(e.tensor);
        Tensor c1 = Tensor::randn({4, 8, 8}, rng), c4 = Tensor::randn({6, 1, 1}, rng);
        check("module.encoder",
              [&enc, c1, c4](const std::vector<Tensor>& in) {
                  auto f = enc.forward(in[0], in[1], 0.37);
                  return add(sum_all(mul(f[0], c1)), sum_all(mul(f[3], c4)));
              },
              inputs);
    }
    {
        // SFD and SFC at C=4, 3x3
        ParamStore ps;
        Rng init(Rng::derive(seed, 12));
        SaliencyGuidance guid(ps, {4, 4, 4, 4}, {}, init);
        Tensor f = Tensor::randn({4, 3, 3}, rng);
        std::vector<Tensor> sfd_inputs{f};
        std::vector<Tensor> sfc_inputs{f};
        for (const auto& e : ps.entries()) {
            if (e.name.rfind("guid.s1.sfd", 0) == 0) sfd_inputs.push_back(e.tensor);
            if (e.name.rfind("guid.s1.sfc", 0) == 0) sfc_inputs.push_back(e.tensor);
        }
        Tensor c = Tensor::randn({4, 3, 3}, rng);
        check("module.sfd",
              [&guid, c](const std::vector<Tensor>& in) { return sum_all(mul(guid.sfd_forward(in[0], 1), c)); },
              sfd_inputs);
        check("module.sfc",
              [&guid, c](const std::vector<Tensor>& in) { return sum_all(mul(guid.sfc_forward(in[0], 1), c)); },
              sfc_inputs);
    }
    {
        // velocity net on a 2x4x4 latent with small conditional features
        ParamStore ps;
        Rng init(Rng::derive(seed, 13));
        VelocityConfig vc{8, 1, 8};
        VelocityNet vnet(ps, vc, {4, 4, 6, 6}, 2, init);
        ConditionBundle cond;
        const std::array<int, 4> ch{4, 4, 6, 6};
        const std::array<int, 4> res{8, 4, 2, 1};
        for (int n = 0; n < 4; ++n) {
            const auto i = static_cast<size_t>(n);
            cond.stage[i] = cond.sfd[i] = cond.cond[i] = Tensor::randn({ch[i], res[i], res[i]}, rng);
        }
        Tensor z = Tensor::randn({2, 4, 4}, rng);
        std::vector<Tensor> inputs{z, cond.cond[0], cond.cond[3]};
        for (const auto& e : ps.entries()) inputs.push_back(e.tensor);
        // the zero-init output head would hide most params from a probe on v,
        // so perturb it away from zero first
        ps.get("vel.out.w").values() = Tensor::randn(ps.get("vel.out.w").shape(), rng).values();
        Tensor c = Tensor::randn({2, 4, 4}, rng);
        check("module.velocity",
              [&vnet, &cond, c](const std::vector<Tensor>& in) {
                  ConditionBundle cb = cond;
                  cb.cond[0] = in[1];
                  cb.cond[3] = in[2];
                  return sum_all(mul(vnet.forward(in[0], 0.61, cb), c));
              },
              inputs);
    }
    {
        // VAE with fixed reparameterization noise: recon + KL end to end
        ParamStore ps;
        Rng init(Rng::derive(seed, 14));
        VaeConfig vc;
        vc.downsample = 4;
        vc.latent_channels = 2;
        vc.hidden = {4, 6};
        TinyVae vae(ps, vc, init);
        Tensor x = Tensor::zeros({1, 8, 8});
        for (auto& v : x.values()) v = rng.uniform();
        Tensor noise = Tensor::randn({2, 2, 2}, rng);
        std::vector<Tensor> inputs{x, noise};
        for (const auto& e : ps.entries()) inputs.push_back(e.tensor);
        check("module.vae",
              [&vae](const std::vector<Tensor>& in) {
                  auto [mu, logvar] = vae.encode(in[0]);
                  Tensor z = TinyVae::reparameterize(mu, logvar, in[1]);
                  Tensor recon = bce_with_logits_mean(vae.decode_logits(z), in[0]);
                  return add(recon, mul_scalar(TinyVae::kl_divergence(mu, logvar), 0.1));
              },
              inputs);
    }

    return out;
}

} // namespace orsiflow
