// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>

#include "orsiflow/nn.hpp"
#include "orsiflow/ops.hpp"

namespace orsiflow {

struct GuidanceConfig {
    bool sfd_enabled = true;
    bool sfc_enabled = true;
    bool strict_eq10 = false; // add channel vectors to the residual instead of gating the branches
};

/// Stage features plus the refined conditional features per stage.
struct ConditionBundle {
    std::array<Tensor, 4> stage; // F_n as produced by the encoder
    std::array<Tensor, 4> sfd;   // after channel-graph discrimination
    std::array<Tensor, 4> cond;  // final conditional features
};

/// Graph reasoning step: (A + I) applied to node features [C, H*W].
inline Tensor graph_reason(const Tensor& adjacency, const Tensor& nodes) {
    if (adjacency.ndim() != 2 || adjacency.dim(0) != adjacency.dim(1))
        throw ShapeMismatch("adjacency must be square, got " + shape_str(adjacency.shape()));
    if (nodes.ndim() != 2 || nodes.dim(0) != adjacency.dim(0))
        throw ShapeMismatch("node features " + shape_str(nodes.shape()) + " do not match adjacency " +
                            shape_str(adjacency.shape()));
    return matmul(add(adjacency, Tensor::eye(adjacency.dim(0))), nodes);
}

/// Dual-gated fusion of the two projected branches with a residual. With
/// `strict` the per-channel products are added to the residual directly
/// without touching the branches.
inline Tensor sfc_combine(const Tensor& f1, const Tensor& f2, const Tensor& w1, const Tensor& w2, const Tensor& s1,
                          const Tensor& s2, const Tensor& residual, bool strict) {
    const Tensor g1 = mul(w1, s1);
    const Tensor g2 = mul(w2, s2);
    if (strict) return add_channel_bias(residual, add(g1, g2));
    return add(add(mul_channel_gain(f1, g1), mul_channel_gain(f2, g2)), residual);
}

/// SFD + SFC applied stage-wise: channel-graph reasoning for global
/// discrimination, then dual-gate calibration with a residual.
class SaliencyGuidance {
public:
    SaliencyGuidance(ParamStore& ps, const std::array<int, 4>& channels, GuidanceConfig cfg, Rng& rng)
        : cfg_(cfg), channels_(channels) {
        // Disabled modules register no parameters: their topologies really
        // are smaller, and the optimizer never sees unused tensors.
        for (int n = 0; n < 4; ++n) {
            const int c = channels[static_cast<size_t>(n)];
            const std::string p = "guid.s" + std::to_string(n + 1) + ".";
            auto& s = stages_[static_cast<size_t>(n)];
            if (cfg_.sfd_enabled) {
                s.proj1_w = ps.conv_param(p + "sfd.proj1.w", c, c, 1, rng);
                s.proj1_b = ps.zeros_param(p + "sfd.proj1.b", {c});
                s.proj2_w = ps.conv_param(p + "sfd.proj2.w", c, c, 1, rng);
                s.proj2_b = ps.zeros_param(p + "sfd.proj2.b", {c});
                s.node_w = ps.conv_param(p + "sfd.node.w", c, c, 1, rng);
                s.node_b = ps.zeros_param(p + "sfd.node.b", {c});
                s.affine_a = ps.ones_param(p + "sfd.affine.a", {1});
                // Start the adjacency gate nearly closed: A sums C node
                // terms, so an open gate at init scales features by O(C).
                s.affine_b = ps.const_param(p + "sfd.affine.b", {1}, -4.0);
            }
            if (cfg_.sfc_enabled) {
                s.f1_w = ps.conv_param(p + "sfc.f1.w", c, c, 1, rng);
                s.f1_b = ps.zeros_param(p + "sfc.f1.b", {c});
                s.f2_w = ps.conv_param(p + "sfc.f2.w", c, c, 1, rng);
                s.f2_b = ps.zeros_param(p + "sfc.f2.b", {c});
                s.gate_w = ps.linear_param(p + "sfc.gate.w", 4 * c, 2 * c, rng);
                s.gate_b = ps.zeros_param(p + "sfc.gate.b", {2 * c});
                // Zero scales make SFC start as the bare residual; the gated
                // branches grow from zero during training.
                s.fc_w = ps.zeros_param(p + "sfc.fc.w", {2 * c, 2 * c});
                s.fc_b = ps.zeros_param(p + "sfc.fc.b", {2 * c});
            }
        }
    }

    const GuidanceConfig& config() const { return cfg_; }

    /// Channel-graph discrimination. Two pooled 1x1 projections give the
    /// channel descriptors; their pairwise differences, squashed and passed
    /// through a learned affine + sigmoid, form the adjacency applied to the
    /// projected node features with a self-loop identity.
    Tensor sfd_forward(const Tensor& f, int stage) const {
        if (!cfg_.sfd_enabled) throw ConfigError("sfd_forward called with sfd.enabled = false");
        const auto& s = stages_[check_stage(f, stage)];
        const int c = f.dim(0), h = f.dim(1), w = f.dim(2);
        const Tensor z1 = pool_global(conv2d(f, s.proj1_w, s.proj1_b, 1, 0), PoolMode::Avg);
        const Tensor z2 = pool_global(conv2d(f, s.proj2_w, s.proj2_b, 1, 0), PoolMode::Avg);
        const Tensor ones_row = Tensor::full({1, c}, 1.0);
        const Tensor ones_col = Tensor::full({c, 1}, 1.0);
        const Tensor pairwise = sub(matmul(reshape(z1, {c, 1}), ones_row), matmul(ones_col, reshape(z2, {1, c})));
        const Tensor adjacency = sigmoid(shift_by(scale_by(tanh_act(pairwise), s.affine_a), s.affine_b));
        const Tensor nodes = reshape(conv2d(f, s.node_w, s.node_b, 1, 0), {c, h * w});
        return reshape(graph_reason(adjacency, nodes), {c, h, w});
    }

    /// The adjacency alone, for inspection and tests.
    Tensor sfd_adjacency(const Tensor& f, int stage) const {
        if (!cfg_.sfd_enabled) throw ConfigError("sfd_adjacency called with sfd.enabled = false");
        const auto& s = stages_[check_stage(f, stage)];
        const int c = f.dim(0);
        const Tensor z1 = pool_global(conv2d(f, s.proj1_w, s.proj1_b, 1, 0), PoolMode::Avg);
        const Tensor z2 = pool_global(conv2d(f, s.proj2_w, s.proj2_b, 1, 0), PoolMode::Avg);
        const Tensor ones_row = Tensor::full({1, c}, 1.0);
        const Tensor ones_col = Tensor::full({c, 1}, 1.0);
        const Tensor pairwise = sub(matmul(reshape(z1, {c, 1}), ones_row), matmul(ones_col, reshape(z2, {1, c})));
        return sigmoid(shift_by(scale_by(tanh_act(pairwise), s.affine_a), s.affine_b));
    }

    /// Dual-branch calibration: average and max statistics of the fused
    /// branches drive sigmoid gates, a channel-attention FC drives scales,
    /// and the gated branches are added onto the residual input.
    Tensor sfc_forward(const Tensor& f, int stage) const {
        if (!cfg_.sfc_enabled) throw ConfigError("sfc_forward called with sfc.enabled = false");
        const auto& s = stages_[check_stage(f, stage)];
        const int c = f.dim(0);
        const Tensor f1 = conv2d(f, s.f1_w, s.f1_b, 1, 0);
        const Tensor f2 = conv2d(f, s.f2_w, s.f2_b, 1, 0);
        const Tensor fused = concat({f1, f2}, 0); // [2C,H,W]
        const Tensor g_avg = pool_global(fused, PoolMode::Avg);
        const Tensor g_max = pool_global(fused, PoolMode::Max);
        const Tensor gate_in = reshape(concat({g_avg, g_max}, 0), {1, 4 * c});
        const Tensor gates = reshape(sigmoid(linear(gate_in, s.gate_w, s.gate_b)), {2 * c});
        const auto w12 = split(gates, 2, 0);
        const Tensor scales = reshape(linear(reshape(g_avg, {1, 2 * c}), s.fc_w, s.fc_b), {2 * c});
        const auto s12 = split(scales, 2, 0);
        return sfc_combine(f1, f2, w12[0], w12[1], s12[0], s12[1], f, cfg_.strict_eq10);
    }

    /// Stage-wise refinement honoring the enable flags; disabled modules
    /// pass features through unchanged.
    ConditionBundle forward(const std::array<Tensor, 4>& feats) const {
        ConditionBundle out;
        out.stage = feats;
        for (int n = 0; n < 4; ++n) {
            const auto i = static_cast<size_t>(n);
            out.sfd[i] = cfg_.sfd_enabled ? sfd_forward(feats[i], n + 1) : feats[i];
            out.cond[i] = cfg_.sfc_enabled ? sfc_forward(out.sfd[i], n + 1) : out.sfd[i];
        }
        return out;
    }

private:
    struct StageParams {
        Tensor proj1_w, proj1_b, proj2_w, proj2_b, node_w, node_b;
        Tensor affine_a, affine_b;
        Tensor f1_w, f1_b, f2_w, f2_b;
        Tensor gate_w, gate_b, fc_w, fc_b;
    };

    size_t check_stage(const Tensor& f, int stage) const {
        if (stage < 1 || stage > 4) throw OutOfRange("guidance stage must be 1..4");
        if (f.ndim() != 3 || f.dim(0) != channels_[static_cast<size_t>(stage - 1)])
            throw ShapeMismatch("stage " + std::to_string(stage) + " expects " +
                                std::to_string(channels_[static_cast<size_t>(stage - 1)]) + " channels, got " +
                                shape_str(f.shape()));
        return static_cast<size_t>(stage - 1);
    }

    GuidanceConfig cfg_;
    std::array<int, 4> channels_;
    std::array<StageParams, 4> stages_;
};

} // namespace orsiflow
