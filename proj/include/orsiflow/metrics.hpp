// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "orsiflow/config.hpp"
#include "orsiflow/ops.hpp"
#include "orsiflow/png_io.hpp"
#include "orsiflow/tensor.hpp"

namespace orsiflow::sod {

// Evaluation conventions, pinned once for every metric in this module:
//  - predictions are [H,W] in [0,1]; ground truth is strictly {0,1}
//  - threshold sweeps quantize the prediction to 8 bits (round-to-nearest)
//    and binarize with pred8 >= tau for tau in 0..255
//  - f-measure uses beta^2 = 0.3; s-measure uses alpha = 0.5
//  - variances and covariances divide by (n - 1), like the original
//    matlab releases of the cited measures
//  - ratio denominators use explicit zero branches instead of an additive
//    eps, so ideal inputs produce exact 0/1 scores

namespace detail {

inline void check_pair(const Tensor& pred, const Tensor& gt) {
    if (pred.ndim() != 2 || gt.ndim() != 2)
        throw ShapeMismatch("metric inputs must be [H,W], got " + shape_str(pred.shape()) + " and " +
                            shape_str(gt.shape()));
    if (pred.shape() != gt.shape())
        throw ShapeMismatch("prediction " + shape_str(pred.shape()) + " vs ground truth " + shape_str(gt.shape()));
    for (double v : gt.values())
        if (v != 0.0 && v != 1.0)
            throw std::invalid_argument("ground truth must be strictly binary {0,1}");
}

inline std::vector<int> quantize8(const Tensor& pred) {
    std::vector<int> q(pred.values().size());
    for (size_t i = 0; i < q.size(); ++i) {
        const double v = std::clamp(pred.data()[i], 0.0, 1.0);
        q[i] = static_cast<int>(std::lround(v * 255.0));
    }
    return q;
}

/// Cumulative counts over thresholds: for each tau, the number of pixels
/// with pred8 >= tau, overall and restricted to gt foreground.
struct ThresholdCounts {
    std::array<int64_t, 256> total{};
    std::array<int64_t, 256> fg{};
};

inline ThresholdCounts threshold_counts(const std::vector<int>& q, const Tensor& gt) {
    std::array<int64_t, 256> hist_total{}, hist_fg{};
    for (size_t i = 0; i < q.size(); ++i) {
        ++hist_total[static_cast<size_t>(q[i])];
        if (gt.data()[i] == 1.0) ++hist_fg[static_cast<size_t>(q[i])];
    }
    ThresholdCounts c;
    int64_t run_total = 0, run_fg = 0;
    for (int tau = 255; tau >= 0; --tau) {
        run_total += hist_total[static_cast<size_t>(tau)];
        run_fg += hist_fg[static_cast<size_t>(tau)];
        c.total[static_cast<size_t>(tau)] = run_total;
        c.fg[static_cast<size_t>(tau)] = run_fg;
    }
    return c;
}

} // namespace detail

inline double mae(const Tensor& pred, const Tensor& gt) {
    detail::check_pair(pred, gt);
    double acc = 0.0;
    for (size_t i = 0; i < pred.values().size(); ++i) acc += std::abs(pred.data()[i] - gt.data()[i]);
    return acc / static_cast<double>(pred.size());
}

/// Maximum F-measure over the 256-level threshold sweep, beta^2 = 0.3.
/// Throws EmptyGroundTruth for an all-zero GT; callers record the image as
/// undefined and exclude it from dataset means.
inline double f_measure_max(const Tensor& pred, const Tensor& gt) {
    detail::check_pair(pred, gt);
    int64_t fg = 0;
    for (double v : gt.values()) fg += v == 1.0 ? 1 : 0;
    if (fg == 0) throw EmptyGroundTruth("f_measure_max is undefined for an all-zero ground truth");
    const auto q = detail::quantize8(pred);
    const auto counts = detail::threshold_counts(q, gt);
    constexpr double beta2 = 0.3;
    double best = 0.0;
    for (int tau = 0; tau < 256; ++tau) {
        const int64_t tp = counts.fg[static_cast<size_t>(tau)];
        const int64_t pos = counts.total[static_cast<size_t>(tau)];
        if (pos == 0 || tp == 0) continue; // degenerate precision/recall -> F = 0
        const double precision = static_cast<double>(tp) / static_cast<double>(pos);
        const double recall = static_cast<double>(tp) / static_cast<double>(fg);
        const double f = (1.0 + beta2) * precision * recall / (beta2 * precision + recall);
        best = std::max(best, f);
    }
    return best;
}

namespace detail {

inline double object_similarity(const std::vector<double>& vals) {
    const auto n = static_cast<double>(vals.size());
    if (vals.empty()) return 0.0;
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= n;
    double sd = 0.0;
    if (vals.size() > 1) {
        double ss = 0.0;
        for (double v : vals) ss += (v - mean) * (v - mean);
        sd = std::sqrt(ss / (n - 1.0));
    }
    const double den = mean * mean + 1.0 + sd;
    return 2.0 * mean / den;
}

inline double s_object(const Tensor& pred, const Tensor& gt) {
    std::vector<double> fg_vals, bg_vals;
    fg_vals.reserve(pred.values().size());
    bg_vals.reserve(pred.values().size());
    double mu = 0.0;
    for (size_t i = 0; i < pred.values().size(); ++i) {
        if (gt.data()[i] == 1.0) {
            fg_vals.push_back(pred.data()[i]);
            mu += 1.0;
        } else {
            bg_vals.push_back(1.0 - pred.data()[i]);
        }
    }
    mu /= static_cast<double>(pred.size());
    return mu * object_similarity(fg_vals) + (1.0 - mu) * object_similarity(bg_vals);
}

/// Region SSIM term on a sub-rectangle, sample statistics with n-1.
inline double region_ssim(const Tensor& pred, const Tensor& gt, int y_begin, int y_end, int x_begin, int x_end) {
    const int W = pred.dim(1);
    const int64_t m = static_cast<int64_t>(y_end - y_begin) * (x_end - x_begin);
    if (m <= 0) return 0.0;
    double mx = 0.0, my = 0.0;
    for (int y = y_begin; y < y_end; ++y)
        for (int x = x_begin; x < x_end; ++x) {
            mx += pred.data()[static_cast<size_t>(y) * W + x];
            my += gt.data()[static_cast<size_t>(y) * W + x];
        }
    mx /= static_cast<double>(m);
    my /= static_cast<double>(m);
    double sx = 0.0, sy = 0.0, sxy = 0.0;
    if (m > 1) {
        for (int y = y_begin; y < y_end; ++y)
            for (int x = x_begin; x < x_end; ++x) {
                const double dx = pred.data()[static_cast<size_t>(y) * W + x] - mx;
                const double dy = gt.data()[static_cast<size_t>(y) * W + x] - my;
                sx += dx * dx;
                sy += dy * dy;
                sxy += dx * dy;
            }
        sx /= static_cast<double>(m - 1);
        sy /= static_cast<double>(m - 1);
        sxy /= static_cast<double>(m - 1);
    }
    const double aq = 4.0 * mx * my * sxy;
    const double bq = (mx * mx + my * my) * (sx + sy);
    if (aq != 0.0) return bq != 0.0 ? aq / bq : 0.0;
    return bq == 0.0 ? 1.0 : 0.0;
}

inline double s_region(const Tensor& pred, const Tensor& gt) {
    const int H = pred.dim(0), W = pred.dim(1);
    double total = 0.0;
    std::vector<double> colsum(static_cast<size_t>(W), 0.0), rowsum(static_cast<size_t>(H), 0.0);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double v = gt.data()[static_cast<size_t>(y) * W + x];
            colsum[static_cast<size_t>(x)] += v;
            rowsum[static_cast<size_t>(y)] += v;
            total += v;
        }
    // 1-based centroid with round-half-away, like the reference release.
    double xw = 0.0, yw = 0.0;
    for (int x = 0; x < W; ++x) xw += colsum[static_cast<size_t>(x)] * (x + 1);
    for (int y = 0; y < H; ++y) yw += rowsum[static_cast<size_t>(y)] * (y + 1);
    const int X = static_cast<int>(std::round(xw / total));
    const int Y = static_cast<int>(std::round(yw / total));

    const double area = static_cast<double>(H) * W;
    const double w1 = static_cast<double>(X) * Y / area;
    const double w2 = static_cast<double>(W - X) * Y / area;
    const double w3 = static_cast<double>(X) * (H - Y) / area;
    const double w4 = 1.0 - w1 - w2 - w3;

    return w1 * region_ssim(pred, gt, 0, Y, 0, X) + w2 * region_ssim(pred, gt, 0, Y, X, W) +
           w3 * region_ssim(pred, gt, Y, H, 0, X) + w4 * region_ssim(pred, gt, Y, H, X, W);
}

} // namespace detail

/// Structure measure S_alpha. Degenerate GT follows the reference release:
/// all-zero GT scores 1 - mean(pred), all-one GT scores mean(pred).
inline double s_measure(const Tensor& pred, const Tensor& gt, double alpha = 0.5) {
    detail::check_pair(pred, gt);
    double mu = 0.0, mp = 0.0;
    for (size_t i = 0; i < gt.values().size(); ++i) {
        mu += gt.data()[i];
        mp += pred.data()[i];
    }
    mu /= static_cast<double>(gt.size());
    mp /= static_cast<double>(pred.size());
    if (mu == 0.0) return 1.0 - mp;
    if (mu == 1.0) return mp;
    const double q = alpha * detail::s_object(pred, gt) + (1.0 - alpha) * detail::s_region(pred, gt);
    return q < 0.0 ? 0.0 : q;
}

/// Maximum enhanced-alignment measure over the 256-level threshold sweep.
/// The enhanced map is averaged over all pixels; constant maps take the
/// reference release's special-case branches.
inline double e_measure_max(const Tensor& pred, const Tensor& gt) {
    detail::check_pair(pred, gt);
    const auto n = static_cast<int64_t>(gt.size());
    int64_t fg = 0;
    for (double v : gt.values()) fg += v == 1.0 ? 1 : 0;
    const auto q = detail::quantize8(pred);
    const auto counts = detail::threshold_counts(q, gt);
    const double nd = static_cast<double>(n);
    double best = 0.0;
    for (int tau = 0; tau < 256; ++tau) {
        const int64_t pos = counts.total[static_cast<size_t>(tau)];
        double score;
        if (fg == 0) {
            score = static_cast<double>(n - pos) / nd;
        } else if (fg == n) {
            score = static_cast<double>(pos) / nd;
        } else {
            const int64_t tp = counts.fg[static_cast<size_t>(tau)];
            const int64_t n11 = tp, n10 = pos - tp, n01 = fg - tp, n00 = n - pos - fg + tp;
            const double mu_p = static_cast<double>(pos) / nd;
            const double mu_g = static_cast<double>(fg) / nd;
            const double pp = 1.0 - mu_p, pn = -mu_p; // centered prediction values
            const double gp = 1.0 - mu_g, gn = -mu_g; // centered GT values
            auto enhanced = [](double fp, double fgv) {
                const double den = fp * fp + fgv * fgv;
                const double xi = den != 0.0 ? 2.0 * fp * fgv / den : 0.0;
                return (xi + 1.0) * (xi + 1.0) / 4.0;
            };
            score = (static_cast<double>(n11) * enhanced(pp, gp) + static_cast<double>(n10) * enhanced(pp, gn) +
                     static_cast<double>(n01) * enhanced(pn, gp) + static_cast<double>(n00) * enhanced(pn, gn)) /
                    nd;
        }
        best = std::max(best, score);
    }
    return best;
}

// ---------------------------------------------------------------------------
// dataset evaluation
// ---------------------------------------------------------------------------

struct ImageMetrics {
    std::string name;
    double s_alpha = 0.0;
    double f_max = 0.0;
    double e_max = 0.0;
    double mae = 0.0;
    bool f_valid = true; // false for empty-GT images (excluded from F mean)
};

struct MetricReport {
    std::vector<ImageMetrics> per_image;
    double mean_s = 0.0;
    double mean_f = 0.0;
    double mean_e = 0.0;
    double mean_mae = 0.0;
    int count = 0;
    int f_excluded = 0;

    void finalize() {
        count = static_cast<int>(per_image.size());
        mean_s = mean_f = mean_e = mean_mae = 0.0;
        int f_count = 0;
        f_excluded = 0;
        for (const auto& im : per_image) {
            mean_s += im.s_alpha;
            mean_e += im.e_max;
            mean_mae += im.mae;
            if (im.f_valid) {
                mean_f += im.f_max;
                ++f_count;
            } else {
                ++f_excluded;
            }
        }
        if (count > 0) {
            mean_s /= count;
            mean_e /= count;
            mean_mae /= count;
        }
        if (f_count > 0) mean_f /= f_count;
    }
};

/// Scores one prediction/GT pair, resizing the prediction to the GT
/// resolution first when they differ.
inline ImageMetrics score_pair(const std::string& name, Tensor pred, const Tensor& gt) {
    ImageMetrics im;
    im.name = name;
    if (pred.shape() != gt.shape()) {
        NoGrad ng;
        Tensor p3 = reshape(pred, {1, pred.dim(0), pred.dim(1)});
        pred = reshape(resize_bilinear(p3, gt.dim(0), gt.dim(1)), gt.shape());
    }
    im.mae = mae(pred, gt);
    im.s_alpha = s_measure(pred, gt);
    im.e_max = e_measure_max(pred, gt);
    try {
        im.f_max = f_measure_max(pred, gt);
    } catch (const EmptyGroundTruth&) {
        im.f_valid = false;
        im.f_max = 0.0;
    }
    return im;
}

/// Evaluates paired PNG directories matched by filename stem. Throws
/// MissingPair listing every prediction without a ground truth.
inline MetricReport evaluate_dataset(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(pred_dir)) throw IoError("prediction directory not found: " + pred_dir.string());
    if (!fs::is_directory(gt_dir)) throw IoError("ground-truth directory not found: " + gt_dir.string());

    std::map<std::string, fs::path> gt_by_stem;
    for (const auto& e : fs::directory_iterator(gt_dir))
        if (e.is_regular_file() && e.path().extension() == ".png") gt_by_stem[e.path().stem().string()] = e.path();

    std::vector<std::pair<fs::path, fs::path>> pairs;
    std::vector<std::string> missing;
    std::vector<fs::path> preds;
    for (const auto& e : fs::directory_iterator(pred_dir))
        if (e.is_regular_file() && e.path().extension() == ".png") preds.push_back(e.path());
    std::sort(preds.begin(), preds.end());
    for (const auto& p : preds) {
        auto it = gt_by_stem.find(p.stem().string());
        if (it == gt_by_stem.end())
            missing.push_back(p.stem().string());
        else
            pairs.emplace_back(p, it->second);
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& s : missing) list += (list.empty() ? "" : ", ") + s;
        throw MissingPair("no ground truth for: " + list);
    }
    if (pairs.empty()) throw MissingPair("no .png predictions found in " + pred_dir.string());

    MetricReport report;
    report.per_image.resize(pairs.size());
    const int threads = std::min<int>(worker_threads(), static_cast<int>(pairs.size()));
    auto work = [&](int t) {
        for (size_t i = static_cast<size_t>(t); i < pairs.size(); i += static_cast<size_t>(threads)) {
            const Tensor pred3 = load_mask(pairs[i].first);
            const Tensor gt3 = load_mask(pairs[i].second);
            Tensor pred = Tensor::from({pred3.dim(1), pred3.dim(2)}, pred3.values());
            std::vector<double> gt_bin(gt3.values().size());
            for (size_t j = 0; j < gt_bin.size(); ++j) gt_bin[j] = gt3.data()[j] > 0.5 ? 1.0 : 0.0;
            const Tensor gt = Tensor::from({gt3.dim(1), gt3.dim(2)}, std::move(gt_bin));
            report.per_image[i] = score_pair(pairs[i].first.stem().string(), pred, gt);
        }
    };
    if (threads <= 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
        for (auto& th : pool) th.join();
    }
    for (const auto& im : report.per_image)
        if (!im.f_valid)
            std::cerr << "warning: empty ground truth for '" << im.name << "', excluded from F-measure mean\n";
    report.finalize();
    return report;
}

} // namespace orsiflow::sod
