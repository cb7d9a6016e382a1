// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <vector>

#include "orsiflow/tensor.hpp"

namespace orsiflow {

// ---------------------------------------------------------------------------
// elementwise arithmetic
// ---------------------------------------------------------------------------

namespace detail {
inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeMismatch(std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}
} // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "add");
    const bool rec = detail::recording({&a, &b});
    Tensor y = detail::make_result(a.shape(), rec);
    const size_t n = a.values().size();
    for (size_t i = 0; i < n; ++i) y.data()[i] = a.data()[i] + b.data()[i];
    if (rec) {
        auto ai = a.impl, bi = b.impl, yi = y.impl;
        Tape::current()->record(yi, [ai, bi, yi] {
            if (yi->grad.empty()) return;
            if (ai->requires_grad) {
                auto& g = detail::grad_of(ai);
                for (size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
            }
            if (bi->requires_grad) {
                auto& g = detail::grad_of(bi);
                for (size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
            }
        });
    }
    return y;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "sub");
    const bool rec = detail::recording({&a, &b});
    Tensor y = detail::make_result(a.shape(), rec);
    const size_t n = a.values().size();
    for (size_t i = 0; i < n; ++i) y.data()[i] = a.data()[i] - b.data()[i];
    if (rec) {
        auto ai = a.impl, bi = b.impl, yi = y.impl;
        Tape::current()->record(yi, [ai, bi, yi] {
            if (yi->grad.empty()) return;
            if (ai->requires_grad) {
                auto& g = detail::grad_of(ai);
                for (size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
            }
            if (bi->requires_grad) {
                auto& g = detail::grad_of(bi);
                for (size_t i = 0; i < g.size(); ++i) g[i] -= yi->grad[i];
            }
        });
    }
    return y;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "mul");
    const bool rec = detail::recording({&a, &b});
    Tensor y = detail::make_result(a.shape(), rec);
    const size_t n = a.values().size();
    for (size_t i = 0; i < n; ++i) y.data()[i] = a.data()[i] * b.data()[i];
    if (rec) {
        auto ai = a.impl, bi = b.impl, yi = y.impl;
        Tape::current()->record(yi, [ai, bi, yi] {
            if (yi->grad.empty()) return;
            if (ai->requires_grad) {
                auto& g = detail::grad_of(ai);
                for (size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i] * bi->value[i];
            }
            if (bi->requires_grad) {
                auto& g = detail::grad_of(bi);
                for (size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i] * ai->value[i];
            }
        });
    }
    return y;
}

inline Tensor add_scalar(const Tensor& a, double c) {
    const bool rec = detail::recording({&a});
    Tensor y = detail::make_result(a.shape(), rec);
    const size_t n = a.values().size();
    for (size_t i = 0; i < n; ++i) y.data()[i] = a.data()[i] + c;
    if (rec) {
        auto ai = a.impl, yi = y.impl;
        Tape::current()->record(yi, [ai, yi] {
            if (yi->grad.empty() || !ai->requires_grad) return;
            auto& g = detail::grad_of(ai);
            for (size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
        });
    }
    return y;
}

inline Tensor mul_scalar(const Tensor& a, double c) {
    const bool rec = detail::recording({&a});
    Tensor y = detail::make_result(a.shape(), rec);
    const size_t n = a.values().size();
    for (size_t i = 0; i < n; ++i) y.data()[i] = a.data()[i] * c;
    if (rec) {
        auto ai = a.impl, yi = y.impl;
        Tape::current()->record(yi, [ai, yi, c] {
            if (yi->grad.empty() || !ai->requires_grad) return;
            auto& g = detail::grad_of(ai);
            for (size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i] * c;
        });
    }
    return y;
}

/// x * s with s a learnable single-element tensor.
inline Tensor scale_by(const Tensor& a, const Tensor& s) {
    if (s.size() != 1) throw ShapeMismatch("scale_by: scale must be a single-element tensor");
    const bool rec = detail::recording({&a, &s});
    Tensor y = detail::make_result(a.shape(), rec);
    const double sv = s.data()[0];
    const size_t n = a.values().size();
    for (size_t i = 0; i < n; ++i) y.data()[i] = a.data()[i] * sv;
    if (rec) {
        auto ai = a.impl, si = s.impl, yi = y.impl;
        Tape::current()->record(yi, [ai, si, yi] {
            if (yi->grad.empty()) return;
            if (ai->requires_grad) {
                auto& g = detail::grad_of(ai);
                for (size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i] * si->value[0];
            }
            if (si->requires_grad) {
                auto& g = detail::grad_of(si);
                double acc = 0.0;
                for (size_t i = 0; i < yi->grad.size(); ++i) acc += yi->grad[i] * ai->value[i];
                g[0] += acc;
            }
        });
    }
    return y;
}

/// x + s with s a learnable single-element tensor.
inline Tensor shift_by(const Tensor& a, const Tensor& s) {
    if (s.size() != 1) throw ShapeMismatch("shift_by: shift must be a single-element tensor");
    const bool rec = detail::recording({&a, &s});
    Tensor y = detail::make_result(a.shape(), rec);
    const double sv = s.data()[0];
    const size_t n = a.values().size();
    for (size_t i = 0; i < n; ++i) y.data()[i] = a.data()[i] + sv;
    if (rec) {
        auto ai = a.impl, si = s.impl, yi = y.impl;
        Tape::current()->record(yi, [ai, si, yi] {
            if (yi->grad.empty()) return;
            if (ai->requires_grad) {
                auto& g = detail::grad_of(ai);
                for (size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
            }
            if (si->requires_grad) {
                auto& g = detail::grad_of(si);
                double acc = 0.0;
                for (double gv : yi->grad) acc += gv;
                g[0] += acc;
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

enum class Activation { Sigmoid, Tanh, Relu };

inline Tensor activation(const Tensor& x, Activation kind) {
    const bool rec = detail::recording({&x});
    Tensor y = detail::make_result(x.shape(), rec);
    const size_t n = x.values().size();
    switch (kind) {
        case Activation::Sigmoid:
            for (size_t i = 0; i < n; ++i) y.data()[i] = 1.0 / (1.0 + std::exp(-x.data()[i]));
            break;
        case Activation::Tanh:
            for (size_t i = 0; i < n; ++i) y.data()[i] = std::tanh(x.data()[i]);
            break;
        case Activation::Relu:
            // NaN propagates so non-finite states surface instead of being
            // silently clipped to zero
            for (size_t i = 0; i < n; ++i) {
                const double v = x.data()[i];
                y.data()[i] = (v > 0.0 || std::isnan(v)) ? v : 0.0;
            }
            break;
    }
    if (rec) {
        auto xi = x.impl, yi = y.impl;
        Tape::current()->record(yi, [xi, yi, kind] {
            if (yi->grad.empty() || !xi->requires_grad) return;
            auto& g = detail::grad_of(xi);
            switch (kind) {
                case Activation::Sigmoid:
                    for (size_t i = 0; i < g.size(); ++i) {
                        const double s = yi->value[i];
                        g[i] += yi->grad[i] * s * (1.0 - s);
                    }
                    break;
                case Activation::Tanh:
                    for (size_t i = 0; i < g.size(); ++i) {
                        const double t = yi->value[i];
                        g[i] += yi->grad[i] * (1.0 - t * t);
                    }
                    break;
                case Activation::Relu:
                    for (size_t i = 0; i < g.size(); ++i)
                        if (xi->value[i] > 0.0) g[i] += yi->grad[i];
                    break;
            }
        });
    }
    return y;
}

inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::Sigmoid); }
inline Tensor tanh_act(const Tensor& x) { return activation(x, Activation::Tanh); }
inline Tensor relu(const Tensor& x) { return activation(x, Activation::Relu); }

inline Tensor exp_op(const Tensor& x) {
    const bool rec = detail::recording({&x});
    Tensor y = detail::make_result(x.shape(), rec);
    const size_t n = x.values().size();
    for (size_t i = 0; i < n; ++i) y.data()[i] = std::exp(x.data()[i]);
    if (rec) {
        auto xi = x.impl, yi = y.impl;
        Tape::current()->record(yi, [xi, yi] {
            if (yi->grad.empty() || !xi->requires_grad) return;
            auto& g = detail::grad_of(xi);
            for (size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i] * yi->value[i];
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// matrix ops
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw ShapeMismatch("matmul expects 2-D operands, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const int M = a.dim(0), K = a.dim(1), K2 = b.dim(0), N = b.dim(1);
    if (K != K2)
        throw ShapeMismatch("matmul inner dims differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const bool rec = detail::recording({&a, &b});
    Tensor y = detail::make_result({M, N}, rec);
    const double* ad = a.data();
    const double* bd = b.data();
    double* yd = y.data();
    for (int m = 0; m < M; ++m) {
        double* yrow = yd + static_cast<size_t>(m) * N;
        for (int k = 0; k < K; ++k) {
            const double av = ad[static_cast<size_t>(m) * K + k];
            if (av == 0.0) continue;
            const double* brow = bd + static_cast<size_t>(k) * N;
            for (int n = 0; n < N; ++n) yrow[n] += av * brow[n];
        }
    }
    if (rec) {
        auto ai = a.impl, bi = b.impl, yi = y.impl;
        Tape::current()->record(yi, [ai, bi, yi, M, K, N] {
            if (yi->grad.empty()) return;
            const double* gy = yi->grad.data();
            if (ai->requires_grad) {
                auto& ga = detail::grad_of(ai);
                for (int m = 0; m < M; ++m)
                    for (int k = 0; k < K; ++k) {
                        const double* brow = bi->value.data() + static_cast<size_t>(k) * N;
                        const double* gyrow = gy + static_cast<size_t>(m) * N;
                        double acc = 0.0;
                        for (int n = 0; n < N; ++n) acc += gyrow[n] * brow[n];
                        ga[static_cast<size_t>(m) * K + k] += acc;
                    }
            }
            if (bi->requires_grad) {
                auto& gb = detail::grad_of(bi);
                for (int m = 0; m < M; ++m) {
                    const double* gyrow = gy + static_cast<size_t>(m) * N;
                    for (int k = 0; k < K; ++k) {
                        const double av = ai->value[static_cast<size_t>(m) * K + k];
                        if (av == 0.0) continue;
                        double* gbrow = gb.data() + static_cast<size_t>(k) * N;
                        for (int n = 0; n < N; ++n) gbrow[n] += av * gyrow[n];
                    }
                }
            }
        });
    }
    return y;
}

inline Tensor transpose(const Tensor& x) {
    if (x.ndim() != 2) throw ShapeMismatch("transpose expects a 2-D tensor, got " + shape_str(x.shape()));
    const int M = x.dim(0), N = x.dim(1);
    const bool rec = detail::recording({&x});
    Tensor y = detail::make_result({N, M}, rec);
    for (int m = 0; m < M; ++m)
        for (int n = 0; n < N; ++n)
            y.data()[static_cast<size_t>(n) * M + m] = x.data()[static_cast<size_t>(m) * N + n];
    if (rec) {
        auto xi = x.impl, yi = y.impl;
        Tape::current()->record(yi, [xi, yi, M, N] {
            if (yi->grad.empty() || !xi->requires_grad) return;
            auto& g = detail::grad_of(xi);
            for (int m = 0; m < M; ++m)
                for (int n = 0; n < N; ++n)
                    g[static_cast<size_t>(m) * N + n] += yi->grad[static_cast<size_t>(n) * M + m];
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// convolution and pooling
// ---------------------------------------------------------------------------

namespace detail {
inline int ceil_div(int a, int b) { return a > 0 ? (a + b - 1) / b : a / b; }
inline int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
} // namespace detail

/// 2-D cross-correlation over [C_in,H,W] with weight [C_out,C_in,k,k] and
/// bias [C_out]. Output dims must divide exactly: (H + 2*pad - k) % stride == 0.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    if (x.ndim() != 3 || w.ndim() != 4)
        throw ShapeMismatch("conv2d expects x[C,H,W], w[Co,Ci,k,k], got " + shape_str(x.shape()) + " and " +
                            shape_str(w.shape()));
    const int Ci = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int Co = w.dim(0), k = w.dim(2);
    if (w.dim(1) != Ci)
        throw ShapeMismatch("conv2d channel mismatch: x has " + std::to_string(Ci) + ", w expects " +
                            std::to_string(w.dim(1)));
    if (w.dim(2) != w.dim(3) || k < 1) throw ShapeMismatch("conv2d kernel must be square and k >= 1");
    if (b.ndim() != 1 || b.dim(0) != Co) throw ShapeMismatch("conv2d bias must be [C_out]");
    if (stride < 1) throw ShapeMismatch("conv2d stride must be >= 1");
    const int hn = H + 2 * pad - k;
    const int wn = W + 2 * pad - k;
    if (hn < 0 || wn < 0 || hn % stride != 0 || wn % stride != 0)
        throw ShapeMismatch("conv2d non-integral output dims for input " + shape_str(x.shape()) + ", k=" +
                            std::to_string(k) + ", stride=" + std::to_string(stride) + ", pad=" + std::to_string(pad));
    const int Ho = hn / stride + 1;
    const int Wo = wn / stride + 1;

    const bool rec = detail::recording({&x, &w, &b});
    Tensor y = detail::make_result({Co, Ho, Wo}, rec);
    const double* xd = x.data();
    const double* wd = w.data();
    double* yd = y.data();
    for (int co = 0; co < Co; ++co) {
        double* yc = yd + static_cast<size_t>(co) * Ho * Wo;
        const double bv = b.data()[co];
        for (int i = 0; i < Ho * Wo; ++i) yc[i] = bv;
        for (int ci = 0; ci < Ci; ++ci) {
            const double* xc = xd + static_cast<size_t>(ci) * H * W;
            const double* wc = wd + (static_cast<size_t>(co) * Ci + ci) * k * k;
            for (int kh = 0; kh < k; ++kh) {
                for (int kw = 0; kw < k; ++kw) {
                    const double wv = wc[kh * k + kw];
                    if (wv == 0.0) continue;
                    const int ow0 = std::max(0, detail::ceil_div(pad - kw, stride));
                    const int ow1 = std::min(Wo - 1, detail::floor_div(W - 1 + pad - kw, stride));
                    for (int oh = 0; oh < Ho; ++oh) {
                        const int ih = oh * stride - pad + kh;
                        if (ih < 0 || ih >= H) continue;
                        const double* xrow = xc + static_cast<size_t>(ih) * W;
                        double* yrow = yc + static_cast<size_t>(oh) * Wo;
                        for (int ow = ow0; ow <= ow1; ++ow) yrow[ow] += wv * xrow[ow * stride - pad + kw];
                    }
                }
            }
        }
    }
    if (rec) {
        auto xi = x.impl, wi = w.impl, bi = b.impl, yi = y.impl;
        Tape::current()->record(yi, [xi, wi, bi, yi, Ci, H, W, Co, k, stride, pad, Ho, Wo] {
            if (yi->grad.empty()) return;
            const double* gy = yi->grad.data();
            if (bi->requires_grad) {
                auto& gb = detail::grad_of(bi);
                for (int co = 0; co < Co; ++co) {
                    const double* gyc = gy + static_cast<size_t>(co) * Ho * Wo;
                    double acc = 0.0;
                    for (int i = 0; i < Ho * Wo; ++i) acc += gyc[i];
                    gb[co] += acc;
                }
            }
            if (xi->requires_grad) {
                auto& gx = detail::grad_of(xi);
                for (int co = 0; co < Co; ++co) {
                    const double* gyc = gy + static_cast<size_t>(co) * Ho * Wo;
                    for (int ci = 0; ci < Ci; ++ci) {
                        double* gxc = gx.data() + static_cast<size_t>(ci) * H * W;
                        const double* wc = wi->value.data() + (static_cast<size_t>(co) * Ci + ci) * k * k;
                        for (int kh = 0; kh < k; ++kh) {
                            for (int kw = 0; kw < k; ++kw) {
                                const double wv = wc[kh * k + kw];
                                if (wv == 0.0) continue;
                                const int ow0 = std::max(0, detail::ceil_div(pad - kw, stride));
                                const int ow1 = std::min(Wo - 1, detail::floor_div(W - 1 + pad - kw, stride));
                                for (int oh = 0; oh < Ho; ++oh) {
                                    const int ih = oh * stride - pad + kh;
                                    if (ih < 0 || ih >= H) continue;
                                    double* gxrow = gxc + static_cast<size_t>(ih) * W;
                                    const double* gyrow = gyc + static_cast<size_t>(oh) * Wo;
                                    for (int ow = ow0; ow <= ow1; ++ow)
                                        gxrow[ow * stride - pad + kw] += wv * gyrow[ow];
                                }
                            }
                        }
                    }
                }
            }
            if (wi->requires_grad) {
                auto& gw = detail::grad_of(wi);
                for (int co = 0; co < Co; ++co) {
                    const double* gyc = gy + static_cast<size_t>(co) * Ho * Wo;
                    for (int ci = 0; ci < Ci; ++ci) {
                        const double* xc = xi->value.data() + static_cast<size_t>(ci) * H * W;
                        double* gwc = gw.data() + (static_cast<size_t>(co) * Ci + ci) * k * k;
                        for (int kh = 0; kh < k; ++kh) {
                            for (int kw = 0; kw < k; ++kw) {
                                const int ow0 = std::max(0, detail::ceil_div(pad - kw, stride));
                                const int ow1 = std::min(Wo - 1, detail::floor_div(W - 1 + pad - kw, stride));
                                double acc = 0.0;
                                for (int oh = 0; oh < Ho; ++oh) {
                                    const int ih = oh * stride - pad + kh;
                                    if (ih < 0 || ih >= H) continue;
                                    const double* xrow = xc + static_cast<size_t>(ih) * W;
                                    const double* gyrow = gyc + static_cast<size_t>(oh) * Wo;
                                    for (int ow = ow0; ow <= ow1; ++ow)
                                        acc += xrow[ow * stride - pad + kw] * gyrow[ow];
                                }
                                gwc[kh * k + kw] += acc;
                            }
                        }
                    }
                }
            }
        });
    }
    return y;
}

enum class PoolMode { Avg, Max };

/// Global pooling [C,H,W] -> [C]. Max gradient routes to the first argmax
/// location in row-major order.
inline Tensor pool_global(const Tensor& x, PoolMode mode) {
    if (x.ndim() != 3) throw ShapeMismatch("pool_global expects [C,H,W], got " + shape_str(x.shape()));
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int hw = H * W;
    const bool rec = detail::recording({&x});
    Tensor y = detail::make_result({C}, rec);
    std::vector<int> argmax;
    if (mode == PoolMode::Max) argmax.resize(static_cast<size_t>(C));
    for (int c = 0; c < C; ++c) {
        const double* xc = x.data() + static_cast<size_t>(c) * hw;
        if (mode == PoolMode::Avg) {
            double acc = 0.0;
            for (int i = 0; i < hw; ++i) acc += xc[i];
            y.data()[c] = acc / hw;
        } else {
            double best = xc[0];
            int bi = 0;
            for (int i = 1; i < hw; ++i)
                if (xc[i] > best) {
                    best = xc[i];
                    bi = i;
                }
            y.data()[c] = best;
            argmax[static_cast<size_t>(c)] = bi;
        }
    }
    if (rec) {
        auto xi = x.impl, yi = y.impl;
        Tape::current()->record(yi, [xi, yi, C, hw, mode, argmax = std::move(argmax)] {
            if (yi->grad.empty() || !xi->requires_grad) return;
            auto& g = detail::grad_of(xi);
            if (mode == PoolMode::Avg) {
                const double inv = 1.0 / hw;
                for (int c = 0; c < C; ++c) {
                    const double gv = yi->grad[c] * inv;
                    double* gc = g.data() + static_cast<size_t>(c) * hw;
                    for (int i = 0; i < hw; ++i) gc[i] += gv;
                }
            } else {
                for (int c = 0; c < C; ++c)
                    g[static_cast<size_t>(c) * hw + argmax[static_cast<size_t>(c)]] += yi->grad[c];
            }
        });
    }
    return y;
}

/// Non-overlapping average pooling with kernel == stride == k.
inline Tensor avg_pool2d(const Tensor& x, int k) {
    if (x.ndim() != 3) throw ShapeMismatch("avg_pool2d expects [C,H,W], got " + shape_str(x.shape()));
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (k < 1 || H % k != 0 || W % k != 0)
        throw ShapeMismatch("avg_pool2d: window " + std::to_string(k) + " must divide " + shape_str(x.shape()));
    if (k == 1) return x;
    const int Ho = H / k, Wo = W / k;
    const bool rec = detail::recording({&x});
    Tensor y = detail::make_result({C, Ho, Wo}, rec);
    const double inv = 1.0 / (k * k);
    for (int c = 0; c < C; ++c) {
        const double* xc = x.data() + static_cast<size_t>(c) * H * W;
        double* yc = y.data() + static_cast<size_t>(c) * Ho * Wo;
        for (int oh = 0; oh < Ho; ++oh)
            for (int ow = 0; ow < Wo; ++ow) {
                double acc = 0.0;
                for (int dh = 0; dh < k; ++dh)
                    for (int dw = 0; dw < k; ++dw) acc += xc[static_cast<size_t>(oh * k + dh) * W + ow * k + dw];
                yc[static_cast<size_t>(oh) * Wo + ow] = acc * inv;
            }
    }
    if (rec) {
        auto xi = x.impl, yi = y.impl;
        Tape::current()->record(yi, [xi, yi, C, H, W, Ho, Wo, k, inv] {
            if (yi->grad.empty() || !xi->requires_grad) return;
            auto& g = detail::grad_of(xi);
            for (int c = 0; c < C; ++c) {
                double* gc = g.data() + static_cast<size_t>(c) * H * W;
                const double* gyc = yi->grad.data() + static_cast<size_t>(c) * Ho * Wo;
                for (int oh = 0; oh < Ho; ++oh)
                    for (int ow = 0; ow < Wo; ++ow) {
                        const double gv = gyc[static_cast<size_t>(oh) * Wo + ow] * inv;
                        for (int dh = 0; dh < k; ++dh)
                            for (int dw = 0; dw < k; ++dw)
                                gc[static_cast<size_t>(oh * k + dh) * W + ow * k + dw] += gv;
                    }
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// broadcast helpers
// ---------------------------------------------------------------------------

/// [C,H,W] + per-channel bias [C].
inline Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
    if (x.ndim() != 3 || b.ndim() != 1 || b.dim(0) != x.dim(0))
        throw ShapeMismatch("add_channel_bias: " + shape_str(x.shape()) + " with bias " + shape_str(b.shape()));
    const int C = x.dim(0), hw = x.dim(1) * x.dim(2);
    const bool rec = detail::recording({&x, &b});
    Tensor y = detail::make_result(x.shape(), rec);
    for (int c = 0; c < C; ++c) {
        const double bv = b.data()[c];
        const double* xc = x.data() + static_cast<size_t>(c) * hw;
        double* yc = y.data() + static_cast<size_t>(c) * hw;
        for (int i = 0; i < hw; ++i) yc[i] = xc[i] + bv;
    }
    if (rec) {
        auto xi = x.impl, bi = b.impl, yi = y.impl;
        Tape::current()->record(yi, [xi, bi, yi, C, hw] {
            if (yi->grad.empty()) return;
            if (xi->requires_grad) {
                auto& g = detail::grad_of(xi);
                for (size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
            }
            if (bi->requires_grad) {
                auto& g = detail::grad_of(bi);
                for (int c = 0; c < C; ++c) {
                    const double* gyc = yi->grad.data() + static_cast<size_t>(c) * hw;
                    double acc = 0.0;
                    for (int i = 0; i < hw; ++i) acc += gyc[i];
                    g[c] += acc;
                }
            }
        });
    }
    return y;
}

/// [C,H,W] * per-channel gain [C].
inline Tensor mul_channel_gain(const Tensor& x, const Tensor& g) {
    if (x.ndim() != 3 || g.ndim() != 1 || g.dim(0) != x.dim(0))
        throw ShapeMismatch("mul_channel_gain: " + shape_str(x.shape()) + " with gain " + shape_str(g.shape()));
    const int C = x.dim(0), hw = x.dim(1) * x.dim(2);
    const bool rec = detail::recording({&x, &g});
    Tensor y = detail::make_result(x.shape(), rec);
    for (int c = 0; c < C; ++c) {
        const double gv = g.data()[c];
        const double* xc = x.data() + static_cast<size_t>(c) * hw;
        double* yc = y.data() + static_cast<size_t>(c) * hw;
        for (int i = 0; i < hw; ++i) yc[i] = xc[i] * gv;
    }
    if (rec) {
        auto xi = x.impl, gi = g.impl, yi = y.impl;
        Tape::current()->record(yi, [xi, gi, yi, C, hw] {
            if (yi->grad.empty()) return;
            if (xi->requires_grad) {
                auto& gx = detail::grad_of(xi);
                for (int c = 0; c < C; ++c) {
                    const double gv = gi->value[static_cast<size_t>(c)];
                    const double* gyc = yi->grad.data() + static_cast<size_t>(c) * hw;
                    double* gxc = gx.data() + static_cast<size_t>(c) * hw;
                    for (int i = 0; i < hw; ++i) gxc[i] += gyc[i] * gv;
                }
            }
            if (gi->requires_grad) {
                auto& gg = detail::grad_of(gi);
                for (int c = 0; c < C; ++c) {
                    const double* gyc = yi->grad.data() + static_cast<size_t>(c) * hw;
                    const double* xc = xi->value.data() + static_cast<size_t>(c) * hw;
                    double acc = 0.0;
                    for (int i = 0; i < hw; ++i) acc += gyc[i] * xc[i];
                    gg[c] += acc;
                }
            }
        });
    }
    return y;
}

/// [N,M] + per-column bias [M].
inline Tensor add_row_bias(const Tensor& x, const Tensor& b) {
    if (x.ndim() != 2 || b.ndim() != 1 || b.dim(0) != x.dim(1))
        throw ShapeMismatch("add_row_bias: " + shape_str(x.shape()) + " with bias " + shape_str(b.shape()));
    const int N = x.dim(0), M = x.dim(1);
    const bool rec = detail::recording({&x, &b});
    Tensor y = detail::make_result(x.shape(), rec);
    for (int r = 0; r < N; ++r) {
        const double* xr = x.data() + static_cast<size_t>(r) * M;
        double* yr = y.data() + static_cast<size_t>(r) * M;
        for (int c = 0; c < M; ++c) yr[c] = xr[c] + b.data()[c];
    }
    if (rec) {
        auto xi = x.impl, bi = b.impl, yi = y.impl;
        Tape::current()->record(yi, [xi, bi, yi, N, M] {
            if (yi->grad.empty()) return;
            if (xi->requires_grad) {
                auto& g = detail::grad_of(xi);
                for (size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
            }
            if (bi->requires_grad) {
                auto& g = detail::grad_of(bi);
                for (int r = 0; r < N; ++r) {
                    const double* gyr = yi->grad.data() + static_cast<size_t>(r) * M;
                    for (int c = 0; c < M; ++c) g[c] += gyr[c];
                }
            }
        });
    }
    return y;
}

/// matmul(x, w) + row-broadcast bias.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_row_bias(matmul(x, w), b); }

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.size())
        throw ShapeMismatch("reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
    const bool rec = detail::recording({&x});
    Tensor y = detail::make_result(std::move(shape), rec);
    y.values() = x.values();
    if (rec) {
        auto xi = x.impl, yi = y.impl;
        Tape::current()->record(yi, [xi, yi] {
            if (yi->grad.empty() || !xi->requires_grad) return;
            auto& g = detail::grad_of(xi);
            for (size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
        });
    }
    return y;
}

inline Tensor concat(const std::vector<Tensor>& xs, int axis) {
    if (xs.empty()) throw ShapeMismatch("concat of zero tensors");
    const int nd = xs[0].ndim();
    if (axis < 0 || axis >= nd) throw ShapeMismatch("concat axis " + std::to_string(axis) + " out of range");
    Shape out = xs[0].shape();
    for (size_t i = 1; i < xs.size(); ++i) {
        const Shape& s = xs[i].shape();
        if (static_cast<int>(s.size()) != nd) throw ShapeMismatch("concat rank mismatch");
        for (int d = 0; d < nd; ++d)
            if (d != axis && s[static_cast<size_t>(d)] != out[static_cast<size_t>(d)])
                throw ShapeMismatch("concat non-axis dims differ: " + shape_str(out) + " vs " + shape_str(s));
        out[static_cast<size_t>(axis)] += s[static_cast<size_t>(axis)];
    }
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= out[static_cast<size_t>(d)];
    for (int d = axis + 1; d < nd; ++d) inner *= out[static_cast<size_t>(d)];

    bool rec = false;
    if (Tape::current())
        for (const Tensor& t : xs)
            if (t.requires_grad()) rec = true;

    Tensor y = detail::make_result(out, rec);
    const int64_t out_block = out[static_cast<size_t>(axis)] * inner;
    int64_t offset = 0;
    for (const Tensor& t : xs) {
        const int64_t blk = t.dim(axis) * inner;
        for (int64_t o = 0; o < outer; ++o)
            std::copy_n(t.data() + o * blk, blk, y.data() + o * out_block + offset);
        offset += blk;
    }
    if (rec) {
        std::vector<std::shared_ptr<TensorImpl>> ins;
        ins.reserve(xs.size());
        for (const Tensor& t : xs) ins.push_back(t.impl);
        auto yi = y.impl;
        Tape::current()->record(yi, [ins, yi, outer, inner, out_block, axis] {
            if (yi->grad.empty()) return;
            int64_t off = 0;
            for (const auto& xi : ins) {
                const int64_t blk = xi->shape[static_cast<size_t>(axis)] * inner;
                if (xi->requires_grad) {
                    auto& g = detail::grad_of(xi);
                    for (int64_t o = 0; o < outer; ++o) {
                        const double* src = yi->grad.data() + o * out_block + off;
                        double* dst = g.data() + o * blk;
                        for (int64_t i = 0; i < blk; ++i) dst[i] += src[i];
                    }
                }
                off += blk;
            }
        });
    }
    return y;
}

/// Contiguous slice along an axis; building block for split().
inline Tensor slice_axis(const Tensor& x, int axis, int start, int len) {
    const int nd = x.ndim();
    if (axis < 0 || axis >= nd) throw ShapeMismatch("slice axis out of range");
    const int dim = x.dim(axis);
    if (start < 0 || len < 1 || start + len > dim) throw ShapeMismatch("slice range out of bounds");
    Shape out = x.shape();
    out[static_cast<size_t>(axis)] = len;
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= x.dim(d);
    for (int d = axis + 1; d < nd; ++d) inner *= x.dim(d);
    const bool rec = detail::recording({&x});
    Tensor y = detail::make_result(out, rec);
    const int64_t in_block = static_cast<int64_t>(dim) * inner;
    const int64_t out_block = static_cast<int64_t>(len) * inner;
    const int64_t off = static_cast<int64_t>(start) * inner;
    for (int64_t o = 0; o < outer; ++o)
        std::copy_n(x.data() + o * in_block + off, out_block, y.data() + o * out_block);
    if (rec) {
        auto xi = x.impl, yi = y.impl;
        Tape::current()->record(yi, [xi, yi, outer, in_block, out_block, off] {
            if (yi->grad.empty() || !xi->requires_grad) return;
            auto& g = detail::grad_of(xi);
            for (int64_t o = 0; o < outer; ++o) {
                const double* src = yi->grad.data() + o * out_block;
                double* dst = g.data() + o * in_block + off;
                for (int64_t i = 0; i < out_block; ++i) dst[i] += src[i];
            }
        });
    }
    return y;
}

inline std::vector<Tensor> split(const Tensor& x, int parts, int axis) {
    if (parts < 1) throw IndivisibleSplit("split into " + std::to_string(parts) + " parts");
    const int dim = x.dim(axis);
    if (dim % parts != 0)
        throw IndivisibleSplit("axis dim " + std::to_string(dim) + " not divisible by " + std::to_string(parts));
    const int len = dim / parts;
    std::vector<Tensor> out;
    out.reserve(static_cast<size_t>(parts));
    for (int p = 0; p < parts; ++p) out.push_back(slice_axis(x, axis, p * len, len));
    return out;
}

/// Bilinear resize (align_corners = false) over [C,H,W]. Same-size resize is
/// an exact identity.
inline Tensor resize_bilinear(const Tensor& x, int Ho, int Wo) {
    if (x.ndim() != 3) throw ShapeMismatch("resize_bilinear expects [C,H,W], got " + shape_str(x.shape()));
    if (Ho < 1 || Wo < 1) throw ShapeMismatch("resize_bilinear target must be >= 1x1");
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);

    struct Lerp {
        int i0, i1;
        double w1;
    };
    auto table = [](int in, int out) {
        std::vector<Lerp> t(static_cast<size_t>(out));
        const double scale = static_cast<double>(in) / out;
        for (int o = 0; o < out; ++o) {
            double src = (o + 0.5) * scale - 0.5;
            if (src < 0.0) src = 0.0;
            int i0 = static_cast<int>(src);
            if (i0 > in - 1) i0 = in - 1;
            const int i1 = std::min(i0 + 1, in - 1);
            t[static_cast<size_t>(o)] = {i0, i1, src - i0};
        }
        return t;
    };
    const auto ty = table(H, Ho);
    const auto tx = table(W, Wo);

    const bool rec = detail::recording({&x});
    Tensor y = detail::make_result({C, Ho, Wo}, rec);
    for (int c = 0; c < C; ++c) {
        const double* xc = x.data() + static_cast<size_t>(c) * H * W;
        double* yc = y.data() + static_cast<size_t>(c) * Ho * Wo;
        for (int oh = 0; oh < Ho; ++oh) {
            const auto& ly = ty[static_cast<size_t>(oh)];
            const double* r0 = xc + static_cast<size_t>(ly.i0) * W;
            const double* r1 = xc + static_cast<size_t>(ly.i1) * W;
            for (int ow = 0; ow < Wo; ++ow) {
                const auto& lx = tx[static_cast<size_t>(ow)];
                const double top = r0[lx.i0] * (1.0 - lx.w1) + r0[lx.i1] * lx.w1;
                const double bot = r1[lx.i0] * (1.0 - lx.w1) + r1[lx.i1] * lx.w1;
                yc[static_cast<size_t>(oh) * Wo + ow] = top * (1.0 - ly.w1) + bot * ly.w1;
            }
        }
    }
    if (rec) {
        auto xi = x.impl, yi = y.impl;
        Tape::current()->record(yi, [xi, yi, C, H, W, Ho, Wo, ty, tx] {
            if (yi->grad.empty() || !xi->requires_grad) return;
            auto& g = detail::grad_of(xi);
            for (int c = 0; c < C; ++c) {
                double* gc = g.data() + static_cast<size_t>(c) * H * W;
                const double* gyc = yi->grad.data() + static_cast<size_t>(c) * Ho * Wo;
                for (int oh = 0; oh < Ho; ++oh) {
                    const auto& ly = ty[static_cast<size_t>(oh)];
                    for (int ow = 0; ow < Wo; ++ow) {
                        const auto& lx = tx[static_cast<size_t>(ow)];
                        const double gv = gyc[static_cast<size_t>(oh) * Wo + ow];
                        gc[static_cast<size_t>(ly.i0) * W + lx.i0] += gv * (1.0 - ly.w1) * (1.0 - lx.w1);
                        gc[static_cast<size_t>(ly.i0) * W + lx.i1] += gv * (1.0 - ly.w1) * lx.w1;
                        gc[static_cast<size_t>(ly.i1) * W + lx.i0] += gv * ly.w1 * (1.0 - lx.w1);
                        gc[static_cast<size_t>(ly.i1) * W + lx.i1] += gv * ly.w1 * lx.w1;
                    }
                }
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// reductions and losses
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& x) {
    const bool rec = detail::recording({&x});
    Tensor y = detail::make_result({1}, rec);
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    y.data()[0] = acc;
    if (rec) {
        auto xi = x.impl, yi = y.impl;
        Tape::current()->record(yi, [xi, yi] {
            if (yi->grad.empty() || !xi->requires_grad) return;
            auto& g = detail::grad_of(xi);
            const double gv = yi->grad[0];
            for (auto& gi : g) gi += gv;
        });
    }
    return y;
}

inline Tensor mean_all(const Tensor& x) {
    const bool rec = detail::recording({&x});
    Tensor y = detail::make_result({1}, rec);
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    const double inv = 1.0 / static_cast<double>(x.size());
    y.data()[0] = acc * inv;
    if (rec) {
        auto xi = x.impl, yi = y.impl;
        Tape::current()->record(yi, [xi, yi, inv] {
            if (yi->grad.empty() || !xi->requires_grad) return;
            auto& g = detail::grad_of(xi);
            const double gv = yi->grad[0] * inv;
            for (auto& gi : g) gi += gv;
        });
    }
    return y;
}

/// Row-wise softmax over [N,M] with max subtraction.
inline Tensor softmax_rows(const Tensor& x) {
    if (x.ndim() != 2) throw ShapeMismatch("softmax_rows expects [N,M], got " + shape_str(x.shape()));
    const int N = x.dim(0), M = x.dim(1);
    const bool rec = detail::recording({&x});
    Tensor y = detail::make_result(x.shape(), rec);
    for (int r = 0; r < N; ++r) {
        const double* xr = x.data() + static_cast<size_t>(r) * M;
        double* yr = y.data() + static_cast<size_t>(r) * M;
        double mx = xr[0];
        for (int c = 1; c < M; ++c) mx = std::max(mx, xr[c]);
        double s = 0.0;
        for (int c = 0; c < M; ++c) {
            yr[c] = std::exp(xr[c] - mx);
            s += yr[c];
        }
        const double inv = 1.0 / s;
        for (int c = 0; c < M; ++c) yr[c] *= inv;
    }
    if (rec) {
        auto xi = x.impl, yi = y.impl;
        Tape::current()->record(yi, [xi, yi, N, M] {
            if (yi->grad.empty() || !xi->requires_grad) return;
            auto& g = detail::grad_of(xi);
            for (int r = 0; r < N; ++r) {
                const double* yr = yi->value.data() + static_cast<size_t>(r) * M;
                const double* gyr = yi->grad.data() + static_cast<size_t>(r) * M;
                double dot = 0.0;
                for (int c = 0; c < M; ++c) dot += gyr[c] * yr[c];
                double* gr = g.data() + static_cast<size_t>(r) * M;
                for (int c = 0; c < M; ++c) gr[c] += yr[c] * (gyr[c] - dot);
            }
        });
    }
    return y;
}

/// Row-wise layer norm over [N,C] with affine [C] params.
inline Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5) {
    if (x.ndim() != 2) throw ShapeMismatch("layer_norm_rows expects [N,C], got " + shape_str(x.shape()));
    const int N = x.dim(0), C = x.dim(1);
    if (gamma.ndim() != 1 || gamma.dim(0) != C || beta.ndim() != 1 || beta.dim(0) != C)
        throw ShapeMismatch("layer_norm_rows affine params must be [C]");
    const bool rec = detail::recording({&x, &gamma, &beta});
    Tensor y = detail::make_result(x.shape(), rec);
    std::vector<double> xhat(static_cast<size_t>(N) * C);
    std::vector<double> inv_std(static_cast<size_t>(N));
    for (int r = 0; r < N; ++r) {
        const double* xr = x.data() + static_cast<size_t>(r) * C;
        double mu = 0.0;
        for (int c = 0; c < C; ++c) mu += xr[c];
        mu /= C;
        double var = 0.0;
        for (int c = 0; c < C; ++c) {
            const double d = xr[c] - mu;
            var += d * d;
        }
        var /= C;
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<size_t>(r)] = inv;
        double* xh = xhat.data() + static_cast<size_t>(r) * C;
        double* yr = y.data() + static_cast<size_t>(r) * C;
        for (int c = 0; c < C; ++c) {
            xh[c] = (xr[c] - mu) * inv;
            yr[c] = gamma.data()[c] * xh[c] + beta.data()[c];
        }
    }
    if (rec) {
        auto xi = x.impl, gi = gamma.impl, bi = beta.impl, yi = y.impl;
        Tape::current()->record(yi, [xi, gi, bi, yi, N, C, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
            if (yi->grad.empty()) return;
            if (bi->requires_grad) {
                auto& gb = detail::grad_of(bi);
                for (int r = 0; r < N; ++r) {
                    const double* gyr = yi->grad.data() + static_cast<size_t>(r) * C;
                    for (int c = 0; c < C; ++c) gb[c] += gyr[c];
                }
            }
            if (gi->requires_grad) {
                auto& gg = detail::grad_of(gi);
                for (int r = 0; r < N; ++r) {
                    const double* gyr = yi->grad.data() + static_cast<size_t>(r) * C;
                    const double* xh = xhat.data() + static_cast<size_t>(r) * C;
                    for (int c = 0; c < C; ++c) gg[c] += gyr[c] * xh[c];
                }
            }
            if (xi->requires_grad) {
                auto& gx = detail::grad_of(xi);
                for (int r = 0; r < N; ++r) {
                    const double* gyr = yi->grad.data() + static_cast<size_t>(r) * C;
                    const double* xh = xhat.data() + static_cast<size_t>(r) * C;
                    double m1 = 0.0, m2 = 0.0;
                    for (int c = 0; c < C; ++c) {
                        const double dxh = gyr[c] * gi->value[static_cast<size_t>(c)];
                        m1 += dxh;
                        m2 += dxh * xh[c];
                    }
                    m1 /= C;
                    m2 /= C;
                    const double inv = inv_std[static_cast<size_t>(r)];
                    double* gxr = gx.data() + static_cast<size_t>(r) * C;
                    for (int c = 0; c < C; ++c) {
                        const double dxh = gyr[c] * gi->value[static_cast<size_t>(c)];
                        gxr[c] += inv * (dxh - m1 - xh[c] * m2);
                    }
                }
            }
        });
    }
    return y;
}

/// Numerically stable mean binary cross-entropy on logits.
inline Tensor bce_with_logits_mean(const Tensor& logits, const Tensor& target) {
    detail::check_same_shape(logits, target, "bce_with_logits_mean");
    const bool rec = detail::recording({&logits, &target});
    Tensor y = detail::make_result({1}, rec);
    const size_t n = logits.values().size();
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double xv = logits.data()[i];
        const double tv = target.data()[i];
        acc += std::max(xv, 0.0) - xv * tv + std::log1p(std::exp(-std::abs(xv)));
    }
    y.data()[0] = acc / static_cast<double>(n);
    if (rec) {
        auto xi = logits.impl, ti = target.impl, yi = y.impl;
        Tape::current()->record(yi, [xi, ti, yi, n] {
            if (yi->grad.empty()) return;
            const double gv = yi->grad[0] / static_cast<double>(n);
            if (xi->requires_grad) {
                auto& g = detail::grad_of(xi);
                for (size_t i = 0; i < n; ++i) {
                    const double s = 1.0 / (1.0 + std::exp(-xi->value[i]));
                    g[i] += gv * (s - ti->value[i]);
                }
            }
            if (ti->requires_grad) {
                auto& g = detail::grad_of(ti);
                for (size_t i = 0; i < n; ++i) g[i] -= gv * xi->value[i];
            }
        });
    }
    return y;
}

/// Mean squared error between two same-shape tensors.
inline Tensor mse_mean(const Tensor& a, const Tensor& b) {
    Tensor d = sub(a, b);
    return mean_all(mul(d, d));
}

inline bool all_finite(const Tensor& t) {
    for (double v : t.values())
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace orsiflow
