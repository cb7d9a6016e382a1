// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "orsiflow/nn.hpp"

namespace orsiflow {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay (decay applied before the adaptive
/// update) and bias-corrected moments. Operates over the trainable entries
/// of a ParamStore; every trainable parameter must carry a grad buffer when
/// step() runs, even if it is all zeros.
class AdamW {
public:
    AdamW(ParamStore& params, AdamWConfig cfg) : params_(&params), cfg_(cfg) {}

    /// One update. `grad_scale` multiplies raw grads first (1/batch for
    /// accumulated per-example gradients).
    void step(double grad_scale = 1.0) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (auto& e : params_->entries()) {
            if (!e.trainable) continue;
            if (!e.tensor.has_grad())
                throw MissingGrad("adamw_step: parameter '" + e.name + "' has no gradient");
            auto& st = state_[e.name];
            auto& val = e.tensor.values();
            const auto& grad = e.tensor.impl->grad;
            if (st.m.size() != val.size()) {
                st.m.assign(val.size(), 0.0);
                st.v.assign(val.size(), 0.0);
            }
            for (size_t i = 0; i < val.size(); ++i) {
                const double g = grad[i] * grad_scale;
                val[i] -= cfg_.lr * cfg_.weight_decay * val[i];
                st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g;
                st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g * g;
                const double mhat = st.m[i] / bc1;
                const double vhat = st.v[i] / bc2;
                val[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    int64_t steps_taken() const { return t_; }
    AdamWConfig& config() { return cfg_; }

private:
    struct Moments {
        std::vector<double> m, v;
    };
    ParamStore* params_;
    AdamWConfig cfg_;
    std::unordered_map<std::string, Moments> state_;
    int64_t t_ = 0;
};

} // namespace orsiflow
