// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch.hpp>

#include <cmath>

#include "orsiflow/encoder.hpp"
#include "orsiflow/gradcheck.hpp"

using namespace orsiflow;

namespace {
double l2_diff(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.values().size(); ++i) {
        const double d = a.values()[i] - b.values()[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

EncoderConfig tiny_config() {
    EncoderConfig ec;
    ec.channels = {4, 6, 8, 8};
    ec.heads = {1, 1, 2, 2};
    ec.sr = {2, 2, 1, 1};
    ec.time_dim = 8;
    ec.mlp_ratio = 2;
    return ec;
}
} // namespace

TEST_CASE("time embedding at t=0 alternates 0 and 1", "[encoder]") {
    Tensor t = time_embed(0.0, 8);
    for (int i = 0; i < 4; ++i) {
        CHECK(t.values()[static_cast<size_t>(2 * i)] == 0.0);
        CHECK(t.values()[static_cast<size_t>(2 * i + 1)] == 1.0);
    }
}

TEST_CASE("time embedding is deterministic and separates distinct times", "[encoder]") {
    Tensor a = time_embed(0.37, 32);
    Tensor b = time_embed(0.37, 32);
    CHECK(a.values() == b.values());
    Tensor c = time_embed(0.62, 32);
    CHECK(l2_diff(a, c) > 0.0);
}

TEST_CASE("time embedding validates its domain", "[encoder]") {
    CHECK_THROWS_AS(time_embed(-0.1, 8), OutOfRange);
    CHECK_THROWS_AS(time_embed(1.1, 8), OutOfRange);
    CHECK_THROWS_AS(time_embed(0.5, 7), ShapeMismatch);
}

TEST_CASE("stage shape contract: 64x64 input through 16/32/64/128 channels", "[encoder]") {
    ParamStore ps;
    Rng rng(1);
    ConditionalEncoder enc(ps, EncoderConfig{}, rng);
    Rng data(2);
    Tensor image = Tensor::randn({3, 64, 64}, data);
    Tensor mask = Tensor::randn({1, 64, 64}, data);

    Tensor s1 = enc.stage_embed(image, mask, nullptr, 1);
    CHECK(s1.shape() == Shape{16, 16, 16});
    Tensor s2 = enc.stage_embed(image, mask, &s1, 2);
    CHECK(s2.shape() == Shape{32, 8, 8});

    auto feats = enc.forward(image, mask, 0.3);
    CHECK(feats[0].shape() == Shape{16, 16, 16});
    CHECK(feats[1].shape() == Shape{32, 8, 8});
    CHECK(feats[2].shape() == Shape{64, 4, 4});
    CHECK(feats[3].shape() == Shape{128, 2, 2});
}

TEST_CASE("resolution contract holds for other sizes divisible by 32", "[encoder][property]") {
    ParamStore ps;
    Rng rng(1);
    ConditionalEncoder enc(ps, tiny_config(), rng);
    Rng data(3);
    for (int size : {32, 96}) {
        Tensor image = Tensor::randn({3, size, size}, data);
        Tensor mask = Tensor::randn({1, size, size}, data);
        auto feats = enc.forward(image, mask, 0.5);
        CHECK(feats[0].shape() == Shape{4, size / 4, size / 4});
        CHECK(feats[3].shape() == Shape{8, size / 32, size / 32});
    }
    Tensor odd = Tensor::randn({3, 48, 48}, data);
    CHECK_THROWS_AS(enc.forward(odd, Tensor::randn({1, 48, 48}, data), 0.5), ShapeMismatch);
}

TEST_CASE("stage contract violations are rejected", "[encoder]") {
    ParamStore ps;
    Rng rng(1);
    ConditionalEncoder enc(ps, tiny_config(), rng);
    Rng data(4);
    Tensor image = Tensor::randn({3, 32, 32}, data);
    Tensor small_mask = Tensor::randn({1, 16, 16}, data);
    CHECK_THROWS_AS(enc.stage_embed(image, small_mask, nullptr, 1), ShapeMismatch);
    Tensor mask = Tensor::randn({1, 32, 32}, data);
    CHECK_THROWS_AS(enc.stage_embed(image, mask, nullptr, 2), ShapeMismatch); // missing prev
    Tensor prev = Tensor::randn({4, 8, 8}, data);
    CHECK_THROWS_AS(enc.stage_embed(image, mask, &prev, 1), ShapeMismatch); // unexpected prev
}

TEST_CASE("the mask branch is live: zero vs random mask change features", "[encoder]") {
    ParamStore ps;
    Rng rng(1);
    ConditionalEncoder enc(ps, tiny_config(), rng);
    Rng data(5);
    Tensor image = Tensor::randn({3, 32, 32}, data);
    auto f_zero = enc.forward(image, Tensor::zeros({1, 32, 32}), 0.5);
    auto f_rand = enc.forward(image, Tensor::randn({1, 32, 32}, data), 0.5);
    CHECK(l2_diff(f_zero[0], f_rand[0]) > 1e-6);
    CHECK(l2_diff(f_zero[3], f_rand[3]) > 1e-6);
}

TEST_CASE("features depend on t and are deterministic in all inputs", "[encoder]") {
    ParamStore ps;
    Rng rng(1);
    ConditionalEncoder enc(ps, tiny_config(), rng);
    Rng data(6);
    Tensor image = Tensor::randn({3, 32, 32}, data);
    Tensor mask = Tensor::randn({1, 32, 32}, data);
    auto a = enc.forward(image, mask, 0.1);
    auto b = enc.forward(image, mask, 0.9);
    auto c = enc.forward(image, mask, 0.1);
    CHECK(l2_diff(a[1], b[1]) > 1e-6);
    for (int n = 0; n < 4; ++n) CHECK(a[static_cast<size_t>(n)].values() == c[static_cast<size_t>(n)].values());
}

TEST_CASE("features move continuously with t", "[encoder][property]") {
    ParamStore ps;
    Rng rng(1);
    ConditionalEncoder enc(ps, tiny_config(), rng);
    Rng data(7);
    Tensor image = Tensor::randn({3, 32, 32}, data);
    Tensor mask = Tensor::randn({1, 32, 32}, data);
    auto base = enc.forward(image, mask, 0.5);
    // the fastest embedding component has period ~6e-3 in t, so probe below it
    double first = 0.0, prev = 1e300;
    for (double delta : {1e-3, 1e-4, 1e-5}) {
        auto moved = enc.forward(image, mask, 0.5 + delta);
        double norm = 0.0;
        for (int n = 0; n < 4; ++n) norm += l2_diff(base[static_cast<size_t>(n)], moved[static_cast<size_t>(n)]);
        CHECK(norm < prev);
        if (first == 0.0) first = norm;
        prev = norm;
    }
    CHECK(prev < first / 50.0); // vanishing perturbation
}

TEST_CASE("gradients reach both image and mask branches", "[encoder]") {
    ParamStore ps;
    Rng rng(1);
    ConditionalEncoder enc(ps, tiny_config(), rng);
    Rng data(8);
    Tensor image = Tensor::randn({3, 32, 32}, data);
    Tensor mask = Tensor::randn({1, 32, 32}, data);
    auto r = gradcheck(
        "encoder-inputs",
        [&enc](const std::vector<Tensor>& in) {
            auto f = enc.forward(in[0], in[1], 0.4);
            return mean_all(mul(f[3], f[3]));
        },
        {image, mask}, 1e-5, 1e-4);
    CHECK(r.passed);

    image.set_requires_grad(true);
    mask.set_requires_grad(true);
    Tape tape;
    auto f = enc.forward(image, mask, 0.4);
    tape.backward(mean_all(mul(f[3], f[3])));
    auto nonzero = [](const std::vector<double>& g) {
        for (double v : g)
            if (v != 0.0) return true;
        return false;
    };
    CHECK(nonzero(image.grad()));
    CHECK(nonzero(mask.grad()));
}
