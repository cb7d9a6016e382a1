// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

// Brute-force reference implementations used as independent oracles in the
// tests. These are deliberately written as plain nested loops over raw
// vectors and never touch the library's op implementations.

#pragma once

#include <cmath>
#include <vector>

namespace oracle {

/// Triple-loop matrix product: a[M x K] * b[K x N].
inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, int M, int K, int N) {
    std::vector<double> y(static_cast<size_t>(M) * N, 0.0);
    for (int m = 0; m < M; ++m)
        for (int n = 0; n < N; ++n)
            for (int k = 0; k < K; ++k)
                y[static_cast<size_t>(m) * N + n] +=
                    a[static_cast<size_t>(m) * K + k] * b[static_cast<size_t>(k) * N + n];
    return y;
}

/// Six-loop cross-correlation with bias, zero padding.
inline std::vector<double> conv2d(const std::vector<double>& x, const std::vector<double>& w,
                                  const std::vector<double>& bias, int Ci, int H, int W, int Co, int k, int stride,
                                  int pad) {
    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (W + 2 * pad - k) / stride + 1;
    std::vector<double> y(static_cast<size_t>(Co) * Ho * Wo, 0.0);
    for (int co = 0; co < Co; ++co)
        for (int oh = 0; oh < Ho; ++oh)
            for (int ow = 0; ow < Wo; ++ow) {
                double acc = bias[static_cast<size_t>(co)];
                for (int ci = 0; ci < Ci; ++ci)
                    for (int kh = 0; kh < k; ++kh)
                        for (int kw = 0; kw < k; ++kw) {
                            const int ih = oh * stride - pad + kh;
                            const int iw = ow * stride - pad + kw;
                            if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                            acc += x[(static_cast<size_t>(ci) * H + ih) * W + iw] *
                                   w[((static_cast<size_t>(co) * Ci + ci) * k + kh) * k + kw];
                        }
                y[(static_cast<size_t>(co) * Ho + oh) * Wo + ow] = acc;
            }
    return y;
}

} // namespace oracle
