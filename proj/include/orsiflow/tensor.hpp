// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "orsiflow/errors.hpp"
#include "orsiflow/rng.hpp"

namespace orsiflow {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

struct TensorImpl {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad; // empty until backward reaches this tensor
    bool requires_grad = false;
    int node = -1;       // index of the producing tape op, -1 for leaves
    uint64_t tape_id = 0;
};

/// Dense f64 tensor handle. Copies share storage; ops create fresh storage.
class Tensor {
public:
    Tensor() = default;

    static Tensor from(Shape shape, std::vector<double> data) {
        if (shape_numel(shape) != static_cast<int64_t>(data.size()))
            throw ShapeMismatch("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
        Tensor t;
        t.impl = std::make_shared<TensorImpl>();
        t.impl->shape = std::move(shape);
        t.impl->value = std::move(data);
        return t;
    }

    static Tensor full(Shape shape, double fill) {
        const auto n = static_cast<size_t>(shape_numel(shape));
        return from(std::move(shape), std::vector<double>(n, fill));
    }

    static Tensor zeros(Shape shape) { return full(std::move(shape), 0.0); }

    static Tensor scalar(double v) { return from({1}, {v}); }

    static Tensor randn(Shape shape, Rng& rng) {
        const auto n = static_cast<size_t>(shape_numel(shape));
        return from(std::move(shape), rng.normal_vec(n));
    }

    /// Identity matrix [n x n].
    static Tensor eye(int n) {
        Tensor t = zeros({n, n});
        for (int i = 0; i < n; ++i) t.impl->value[static_cast<size_t>(i) * n + i] = 1.0;
        return t;
    }

    bool defined() const { return impl != nullptr; }
    const Shape& shape() const { return impl->shape; }
    int dim(int i) const { return impl->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(impl->shape.size()); }
    int64_t size() const { return static_cast<int64_t>(impl->value.size()); }

    double* data() { return impl->value.data(); }
    const double* data() const { return impl->value.data(); }
    std::vector<double>& values() { return impl->value; }
    const std::vector<double>& values() const { return impl->value; }

    double item() const {
        if (size() != 1) throw NotScalar("item() on tensor of shape " + shape_str(shape()));
        return impl->value[0];
    }

    bool requires_grad() const { return impl->requires_grad; }
    Tensor& set_requires_grad(bool rg) {
        impl->requires_grad = rg;
        return *this;
    }

    bool has_grad() const { return !impl->grad.empty(); }
    const std::vector<double>& grad() const {
        if (impl->grad.empty()) throw MissingGrad("no gradient recorded for tensor " + shape_str(shape()));
        return impl->grad;
    }
    void zero_grad() {
        if (!impl->grad.empty()) std::fill(impl->grad.begin(), impl->grad.end(), 0.0);
    }
    void drop_grad() { impl->grad.clear(); }

    /// Deep copy with no autodiff history.
    Tensor clone() const {
        Tensor t = from(impl->shape, impl->value);
        return t;
    }

    /// Same values, detached from any tape and not requiring grad.
    Tensor detach() const { return clone(); }

    std::shared_ptr<TensorImpl> impl;
};

/// Define-by-run gradient tape. Constructing a Tape makes it the active tape
/// for the current thread; ops record themselves onto it when any input
/// requires grad. One tape per thread at a time; a fresh tape is built for
/// every forward pass.
class Tape {
public:
    Tape() : prev_(current_), id_(++counter_) { current_ = this; }
    ~Tape() { current_ = prev_; }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* current() { return current_; }

    static Tape* swap_current(Tape* t) {
        Tape* old = current_;
        current_ = t;
        return old;
    }

    uint64_t id() const { return id_; }
    size_t num_ops() const { return ops_.size(); }

    void record(const std::shared_ptr<TensorImpl>& out, std::function<void()> backward_fn) {
        out->node = static_cast<int>(ops_.size());
        out->tape_id = id_;
        ops_.push_back(std::move(backward_fn));
    }

    /// Reverse sweep from a scalar loss. Fills grad buffers of every
    /// reachable requires_grad tensor; grads accumulate additively.
    void backward(const Tensor& loss) {
        if (loss.size() != 1) throw NotScalar("backward() requires a scalar loss, got " + shape_str(loss.shape()));
        if (loss.impl->node < 0 || loss.impl->tape_id != id_)
            throw DetachedGraph("loss is not recorded on this tape");
        loss.impl->grad.assign(1, 1.0);
        for (int i = loss.impl->node; i >= 0; --i) ops_[static_cast<size_t>(i)]();
    }

private:
    std::vector<std::function<void()>> ops_;
    Tape* prev_ = nullptr;
    uint64_t id_ = 0;
    inline static thread_local Tape* current_ = nullptr;
    inline static thread_local uint64_t counter_ = 0;
};

/// RAII guard that disables recording, for frozen/inference passes.
struct NoGrad {
    NoGrad() : saved_(Tape::swap_current(nullptr)) {}
    ~NoGrad() { Tape::swap_current(saved_); }
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;

private:
    Tape* saved_;
};

/// Convenience free function mirroring Tape::backward on the active tape.
inline void backward(const Tensor& loss) {
    Tape* t = Tape::current();
    if (!t) throw DetachedGraph("backward() called with no active tape");
    t->backward(loss);
}

namespace detail {

inline bool recording(std::initializer_list<const Tensor*> inputs) {
    if (!Tape::current()) return false;
    for (const Tensor* t : inputs)
        if (t->impl->requires_grad) return true;
    return false;
}

inline std::vector<double>& grad_of(const std::shared_ptr<TensorImpl>& im) {
    if (im->grad.empty()) im->grad.assign(im->value.size(), 0.0);
    return im->grad;
}

inline Tensor make_result(Shape shape, bool requires_grad) {
    const auto n = static_cast<size_t>(shape_numel(shape));
    Tensor t = Tensor::from(std::move(shape), std::vector<double>(n, 0.0));
    t.impl->requires_grad = requires_grad;
    return t;
}

} // namespace detail

} // namespace orsiflow
