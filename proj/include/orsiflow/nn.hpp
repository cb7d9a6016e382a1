// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "orsiflow/ops.hpp"
#include "orsiflow/rng.hpp"
#include "orsiflow/tensor.hpp"

namespace orsiflow {

/// Kaiming-uniform fan-in initialization, bound = sqrt(6 / fan_in).
inline Tensor kaiming_uniform(Shape shape, int fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    const auto n = static_cast<size_t>(shape_numel(shape));
    std::vector<double> data(n);
    for (auto& v : data) v = rng.uniform(-bound, bound);
    return Tensor::from(std::move(shape), std::move(data));
}

/// Named parameter collection shared by all network modules. Parameters are
/// registered in construction order, which fixes both initialization draws
/// and checkpoint layout.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor tensor;
        bool trainable = true;
    };

    Tensor add(const std::string& name, Tensor init, bool trainable = true) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        init.set_requires_grad(trainable);
        index_[name] = entries_.size();
        entries_.push_back({name, init, trainable});
        return init;
    }

    Tensor conv_param(const std::string& name, int c_out, int c_in, int k, Rng& rng) {
        return add(name, kaiming_uniform({c_out, c_in, k, k}, c_in * k * k, rng));
    }

    Tensor linear_param(const std::string& name, int in, int out, Rng& rng) {
        return add(name, kaiming_uniform({in, out}, in, rng));
    }

    Tensor zeros_param(const std::string& name, Shape shape) { return add(name, Tensor::zeros(std::move(shape))); }

    Tensor ones_param(const std::string& name, Shape shape) { return add(name, Tensor::full(std::move(shape), 1.0)); }

    Tensor const_param(const std::string& name, Shape shape, double fill) {
        return add(name, Tensor::full(std::move(shape), fill));
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Tensor get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return entries_[it->second].tensor;
    }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }
    size_t size() const { return entries_.size(); }

    /// Marks every parameter whose name starts with `prefix` (non-)trainable.
    /// Frozen parameters stop requiring grad, so no graph is recorded
    /// through them.
    void set_trainable(const std::string& prefix, bool trainable) {
        for (auto& e : entries_) {
            if (e.name.rfind(prefix, 0) == 0) {
                e.trainable = trainable;
                e.tensor.set_requires_grad(trainable);
                if (!trainable) e.tensor.drop_grad();
            }
        }
    }

    void zero_grads() {
        for (auto& e : entries_)
            if (e.trainable) e.tensor.zero_grad();
    }

    int64_t total_elements() const {
        int64_t n = 0;
        for (const auto& e : entries_) n += e.tensor.size();
        return n;
    }

    int64_t trainable_elements() const {
        int64_t n = 0;
        for (const auto& e : entries_)
            if (e.trainable) n += e.tensor.size();
        return n;
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

} // namespace orsiflow
