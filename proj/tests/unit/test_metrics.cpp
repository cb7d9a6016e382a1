// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch.hpp>

#include <filesystem>
#include <numeric>
#include <unistd.h>

#include "orsiflow/metrics.hpp"
#include "orsiflow/png_io.hpp"

#include "../oracles/sod_reference.hpp"

using namespace orsiflow;
namespace fs = std::filesystem;

namespace {

struct Pair {
    Tensor pred, gt;
    oracle::Map pred_map, gt_map;
};

/// Random (pred, gt) pair; gt gets a random blob plus salt so both empty-ish
/// and dense cases appear. Predictions are smooth-ish random values.
Pair random_pair(Rng& rng, int h, int w) {
    Pair p;
    std::vector<double> pred(static_cast<size_t>(h) * w), gt(static_cast<size_t>(h) * w, 0.0);
    const double cy = rng.uniform(0.2, 0.8) * h;
    const double cx = rng.uniform(0.2, 0.8) * w;
    const double r = rng.uniform(0.1, 0.35) * std::min(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
            if (d2 <= r * r || rng.uniform() < 0.02) gt[i] = 1.0;
            const double near = d2 <= (r + 2) * (r + 2) ? 0.55 : 0.25;
            pred[i] = std::clamp(near + 0.45 * (rng.uniform() - 0.5), 0.0, 1.0);
        }
    p.pred = Tensor::from({h, w}, pred);
    p.gt = Tensor::from({h, w}, gt);
    p.pred_map = {h, w, pred};
    p.gt_map = {h, w, gt};
    return p;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("orsiflow_metrics_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(reinterpret_cast<uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

} // namespace

TEST_CASE("mae basics", "[metrics]") {
    Tensor gt = Tensor::from({2, 2}, {0, 1, 0, 1});
    CHECK(sod::mae(gt, gt) == 0.0);
    CHECK(sod::mae(Tensor::full({2, 2}, 1.0), Tensor::zeros({2, 2})) == 1.0);
    Tensor pred = Tensor::from({1, 2}, {0.2, 0.4});
    Tensor g2 = Tensor::from({1, 2}, {0.0, 1.0});
    CHECK(sod::mae(pred, g2) == Approx(0.4).margin(1e-15));
    CHECK_THROWS_AS(sod::mae(pred, gt), ShapeMismatch);
}

TEST_CASE("perfect prediction scores exactly (1,1,1,0)", "[metrics]") {
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        auto p = random_pair(rng, 16, 16);
        CHECK(sod::mae(p.gt, p.gt) == 0.0);
        CHECK(sod::f_measure_max(p.gt, p.gt) == 1.0);
        CHECK(sod::s_measure(p.gt, p.gt) == 1.0);
        CHECK(sod::e_measure_max(p.gt, p.gt) == 1.0);
    }
}

TEST_CASE("f-measure of all-ones prediction on half-ones gt", "[metrics]") {
    Tensor pred = Tensor::full({4, 4}, 1.0);
    Tensor gt = Tensor::zeros({4, 4});
    for (int i = 0; i < 8; ++i) gt.values()[static_cast<size_t>(i)] = 1.0;
    // P = 0.5, R = 1 at every threshold: F = 1.3*0.5/(0.3*0.5+1)
    CHECK(sod::f_measure_max(pred, gt) == Approx(1.3 * 0.5 / (0.3 * 0.5 + 1.0)).epsilon(1e-12));
}

TEST_CASE("f-measure rejects empty ground truth", "[metrics]") {
    Tensor pred = Tensor::full({3, 3}, 0.5);
    CHECK_THROWS_AS(sod::f_measure_max(pred, Tensor::zeros({3, 3})), EmptyGroundTruth);
}

TEST_CASE("s-measure degenerate conventions", "[metrics]") {
    Tensor zero = Tensor::zeros({4, 4});
    CHECK(sod::s_measure(zero, zero) == 1.0);                                // 1 - mean(pred)
    CHECK(sod::s_measure(Tensor::full({4, 4}, 0.25), zero) == Approx(0.75)); // 1 - 0.25
    Tensor one = Tensor::full({4, 4}, 1.0);
    CHECK(sod::s_measure(Tensor::full({4, 4}, 0.6), one) == Approx(0.6)); // mean(pred)
}

TEST_CASE("e-measure of inverted balanced prediction", "[metrics]") {
    // gt: left half ones; pred = 1 - gt. At tau = 0 the binarized map is all
    // ones (centered prediction identically zero), so every pixel scores
    // 1/4; all other thresholds align perfectly wrong and score 0.
    const int h = 32, w = 32;
    Tensor gt = Tensor::zeros({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w / 2; ++x) gt.values()[static_cast<size_t>(y) * w + x] = 1.0;
    Tensor pred = Tensor::zeros({h, w});
    for (size_t i = 0; i < pred.values().size(); ++i) pred.values()[i] = 1.0 - gt.values()[i];
    CHECK(sod::e_measure_max(pred, gt) == Approx(0.25).margin(1e-12));
    // pinned against the straight-from-definition reference
    oracle::Map pm{h, w, pred.values()}, gm{h, w, gt.values()};
    CHECK(sod::e_measure_max(pred, gt) == Approx(oracle::ref_e_measure_max(pm, gm)).margin(1e-12));
}

TEST_CASE("50 seeded random pairs match the reference implementations", "[metrics][oracle]") {
    Rng rng(2026);
    for (int trial = 0; trial < 50; ++trial) {
        auto p = random_pair(rng, 32, 32);
        const double ref_mae = oracle::ref_mae(p.pred_map, p.gt_map);
        const double ref_f = oracle::ref_f_measure_max(p.pred_map, p.gt_map);
        const double ref_s = oracle::ref_s_measure(p.pred_map, p.gt_map);
        const double ref_e = oracle::ref_e_measure_max(p.pred_map, p.gt_map);
        INFO("trial " << trial);
        CHECK(sod::mae(p.pred, p.gt) == Approx(ref_mae).margin(1e-12));
        if (ref_f >= 0.0) CHECK(sod::f_measure_max(p.pred, p.gt) == Approx(ref_f).margin(1e-12));
        CHECK(sod::s_measure(p.pred, p.gt) == Approx(ref_s).margin(1e-9));
        CHECK(sod::e_measure_max(p.pred, p.gt) == Approx(ref_e).margin(1e-9));
    }
}

TEST_CASE("metrics lie in [0,1] and MAE/F are permutation invariant", "[metrics][property]") {
    Rng rng(55);
    for (int trial = 0; trial < 10; ++trial) {
        auto p = random_pair(rng, 16, 16);
        const double m = sod::mae(p.pred, p.gt);
        const double f = sod::f_measure_max(p.pred, p.gt);
        const double s = sod::s_measure(p.pred, p.gt);
        const double e = sod::e_measure_max(p.pred, p.gt);
        for (double v : {m, f, s, e}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        // identical spatial permutation of pred and gt
        std::vector<size_t> perm(p.pred.values().size());
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        Tensor pp = Tensor::zeros({16, 16}), pg = Tensor::zeros({16, 16});
        for (size_t i = 0; i < perm.size(); ++i) {
            pp.values()[i] = p.pred.values()[perm[i]];
            pg.values()[i] = p.gt.values()[perm[i]];
        }
        CHECK(sod::mae(pp, pg) == Approx(m).margin(1e-12));
        CHECK(sod::f_measure_max(pp, pg) == Approx(f).margin(1e-12));
    }
}

TEST_CASE("F and E improve monotonically as an inverted prediction is repaired", "[metrics][property]") {
    Rng rng(66);
    for (int trial = 0; trial < 5; ++trial) {
        auto p = random_pair(rng, 16, 16);
        Tensor pred = Tensor::zeros({16, 16});
        for (size_t i = 0; i < pred.values().size(); ++i) pred.values()[i] = 1.0 - p.gt.values()[i];
        double prev_f = sod::f_measure_max(pred, p.gt);
        double prev_e = sod::e_measure_max(pred, p.gt);
        // repair random growing subsets toward gt
        std::vector<size_t> order(pred.values().size());
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        for (int step = 1; step <= 4; ++step) {
            const size_t upto = order.size() * static_cast<size_t>(step) / 4;
            for (size_t i = 0; i < upto; ++i) pred.values()[order[i]] = p.gt.values()[order[i]];
            const double f = sod::f_measure_max(pred, p.gt);
            const double e = sod::e_measure_max(pred, p.gt);
            CHECK(f >= prev_f - 1e-12);
            CHECK(e >= prev_e - 1e-12);
            prev_f = f;
            prev_e = e;
        }
    }
}

TEST_CASE("dataset evaluation on files", "[metrics]") {
    TempDir tmp;
    fs::create_directories(tmp.path / "pred");
    fs::create_directories(tmp.path / "gt");
    Rng rng(8);
    for (int i = 0; i < 3; ++i) {
        auto p = random_pair(rng, 24, 24);
        // binarize gt to file, use gt itself as a perfect prediction
        save_mask(tmp.path / "gt" / ("img" + std::to_string(i) + ".png"), reshape(p.gt, {1, 24, 24}));
        save_mask(tmp.path / "pred" / ("img" + std::to_string(i) + ".png"), reshape(p.gt, {1, 24, 24}));
    }
    auto report = sod::evaluate_dataset(tmp.path / "pred", tmp.path / "gt");
    CHECK(report.count == 3);
    CHECK(report.mean_mae == 0.0);
    CHECK(report.mean_s == 1.0);
    CHECK(report.mean_f == 1.0);
    CHECK(report.mean_e == 1.0);

    // single-image dataset: mean equals the image value
    fs::create_directories(tmp.path / "pred1");
    auto q = random_pair(rng, 24, 24);
    save_mask(tmp.path / "pred1" / "img0.png", reshape(q.pred, {1, 24, 24}));
    fs::create_directories(tmp.path / "gt1");
    save_mask(tmp.path / "gt1" / "img0.png", reshape(q.gt, {1, 24, 24}));
    auto single = sod::evaluate_dataset(tmp.path / "pred1", tmp.path / "gt1");
    REQUIRE(single.count == 1);
    CHECK(single.mean_mae == Approx(single.per_image[0].mae));
    CHECK(single.mean_s == Approx(single.per_image[0].s_alpha));

    // mismatched filenames
    fs::create_directories(tmp.path / "pred_bad");
    save_mask(tmp.path / "pred_bad" / "other.png", reshape(q.pred, {1, 24, 24}));
    CHECK_THROWS_AS(sod::evaluate_dataset(tmp.path / "pred_bad", tmp.path / "gt1"), MissingPair);
}

TEST_CASE("prediction is resized to gt resolution before scoring", "[metrics]") {
    // constant prediction resizes to a constant, so scores are unchanged
    Tensor pred_small = Tensor::full({8, 8}, 0.5);
    Tensor gt = Tensor::zeros({16, 16});
    for (int i = 0; i < 128; ++i) gt.values()[static_cast<size_t>(i)] = 1.0;
    auto im = sod::score_pair("x", pred_small, gt);
    CHECK(im.mae == Approx(0.5).margin(1e-12));
}
