// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "orsiflow/ops.hpp"
#include "orsiflow/tensor.hpp"

namespace orsiflow {

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    int64_t checked = 0;
    bool passed = false;
};

struct GradCheckReport {
    std::vector<GradCheckResult> results;
    bool all_passed() const {
        for (const auto& r : results)
            if (!r.passed) return false;
        return !results.empty();
    }
    double worst_rel_err() const {
        double w = 0.0;
        for (const auto& r : results) w = std::max(w, r.max_rel_err);
        return w;
    }
};

/// Central finite-difference check of a scalar-valued graph builder against
/// the tape's analytic gradients. `f` must be deterministic: it is re-run
/// twice per checked element. Relative error uses |a - n| / max(|a| + |n|, 1).
inline GradCheckResult gradcheck(const std::string& name,
                                 const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                 std::vector<Tensor> inputs, double h = 1e-5, double tol = 1e-4) {
    GradCheckResult res;
    res.name = name;

    for (auto& t : inputs) t.set_requires_grad(true);
    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        Tensor loss = f(inputs);
        tape.backward(loss);
        for (auto& t : inputs) {
            analytic.push_back(t.has_grad() ? t.impl->grad : std::vector<double>(t.values().size(), 0.0));
            t.drop_grad();
        }
    }

    auto eval = [&]() {
        NoGrad ng;
        return f(inputs).item();
    };

    for (size_t p = 0; p < inputs.size(); ++p) {
        auto& vals = inputs[p].values();
        for (size_t i = 0; i < vals.size(); ++i) {
            const double keep = vals[i];
            vals[i] = keep + h;
            const double fp = eval();
            vals[i] = keep - h;
            const double fm = eval();
            vals[i] = keep;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[p][i];
            const double abs_err = std::abs(a - numeric);
            const double rel_err = abs_err / std::max(std::abs(a) + std::abs(numeric), 1.0);
            res.max_abs_err = std::max(res.max_abs_err, abs_err);
            res.max_rel_err = std::max(res.max_rel_err, rel_err);
            ++res.checked;
        }
    }
    res.passed = res.max_rel_err < tol;
    return res;
}

} // namespace orsiflow
