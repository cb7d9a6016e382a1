// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch.hpp>

#include <cstring>

#include "orsiflow/ops.hpp"

#include "../oracles/naive_ops.hpp"

using namespace orsiflow;

TEST_CASE("matmul identity and small product", "[tensor]") {
    Tensor b = Tensor::from({2, 1}, {5.0, -3.0});
    Tensor y = matmul(Tensor::eye(2), b);
    CHECK(y.values() == b.values());

    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor ones = Tensor::from({2, 1}, {1, 1});
    Tensor p = matmul(a, ones);
    CHECK(p.values() == std::vector<double>{3.0, 7.0});
}

TEST_CASE("matmul against triple-loop oracle", "[tensor]") {
    Rng rng(11);
    const int M = 5, K = 7, N = 4;
    Tensor a = Tensor::randn({M, K}, rng);
    Tensor b = Tensor::randn({K, N}, rng);
    const auto ref = oracle::matmul(a.values(), b.values(), M, K, N);
    const Tensor y = matmul(a, b);
    for (size_t i = 0; i < ref.size(); ++i) CHECK(y.values()[i] == Approx(ref[i]).margin(1e-12));
}

TEST_CASE("matmul rejects mismatched inner dims", "[tensor]") {
    Rng rng(1);
    Tensor a = Tensor::randn({2, 3}, rng);
    Tensor b = Tensor::randn({2, 3}, rng);
    CHECK_THROWS_AS(matmul(a, b), ShapeMismatch);
}

TEST_CASE("conv2d 1x1 scaling and all-ones summation", "[tensor]") {
    Tensor x = Tensor::from({1, 2, 2}, {1, 2, 3, 4});
    Tensor w = Tensor::from({1, 1, 1, 1}, {2.0});
    Tensor b = Tensor::zeros({1});
    Tensor y = conv2d(x, w, b, 1, 0);
    CHECK(y.values() == std::vector<double>{2, 4, 6, 8});

    Tensor x3 = Tensor::full({1, 3, 3}, 1.0);
    Tensor w3 = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor y3 = conv2d(x3, w3, b, 1, 0);
    REQUIRE(y3.shape() == Shape{1, 1, 1});
    CHECK(y3.values()[0] == 9.0);
}

TEST_CASE("conv2d multi-channel matches six-loop oracle", "[tensor]") {
    Rng rng(42);
    const int Ci = 2, H = 6, W = 5, Co = 3, k = 3;
    Tensor x = Tensor::randn({Ci, H, W}, rng);
    Tensor w = Tensor::randn({Co, Ci, k, k}, rng);
    Tensor b = Tensor::randn({Co}, rng);
    for (auto [stride, pad] : {std::pair{1, 1}, std::pair{1, 0}}) {
        const Tensor y = conv2d(x, w, b, stride, pad);
        const auto ref = oracle::conv2d(x.values(), w.values(), b.values(), Ci, H, W, Co, k, stride, pad);
        REQUIRE(y.values().size() == ref.size());
        for (size_t i = 0; i < ref.size(); ++i) CHECK(y.values()[i] == Approx(ref[i]).margin(1e-12));
    }
}

TEST_CASE("conv2d rejects non-integral output dims", "[tensor]") {
    Rng rng(3);
    Tensor x = Tensor::randn({1, 5, 5}, rng);
    Tensor w = Tensor::randn({1, 1, 2, 2}, rng);
    Tensor b = Tensor::zeros({1});
    CHECK_THROWS_AS(conv2d(x, w, b, 2, 0), ShapeMismatch);
}

TEST_CASE("global pooling values", "[tensor]") {
    Tensor c = Tensor::full({3, 4, 4}, 0.7);
    const Tensor avg = pool_global(c, PoolMode::Avg);
    for (double v : avg.values()) CHECK(v == Approx(0.7).margin(1e-15));
    CHECK(pool_global(c, PoolMode::Max).values() == std::vector<double>{0.7, 0.7, 0.7});

    Tensor x = Tensor::from({1, 2, 2}, {1, 2, 3, 4});
    CHECK(pool_global(x, PoolMode::Avg).values()[0] == 2.5);
    CHECK(pool_global(x, PoolMode::Max).values()[0] == 4.0);
}

TEST_CASE("avg pool gradient is uniform", "[tensor]") {
    Rng rng(5);
    Tensor x = Tensor::randn({2, 3, 3}, rng);
    x.set_requires_grad(true);
    Tape tape;
    Tensor y = sum_all(pool_global(x, PoolMode::Avg));
    tape.backward(y);
    for (double g : x.grad()) CHECK(g == Approx(1.0 / 9.0));
}

TEST_CASE("max pool gradient routes to first argmax", "[tensor]") {
    Tensor x = Tensor::from({1, 2, 2}, {3.0, 7.0, 7.0, 1.0}); // tie between index 1 and 2
    x.set_requires_grad(true);
    Tape tape;
    Tensor y = sum_all(pool_global(x, PoolMode::Max));
    tape.backward(y);
    CHECK(x.grad() == std::vector<double>{0, 1, 0, 0});
}

TEST_CASE("activation fixed points", "[tensor]") {
    Tensor zero = Tensor::scalar(0.0);
    CHECK(activation(zero, Activation::Sigmoid).item() == 0.5);
    CHECK(activation(zero, Activation::Tanh).item() == 0.0);
    CHECK(activation(Tensor::scalar(-2.0), Activation::Relu).item() == 0.0);
    CHECK(activation(Tensor::scalar(2.0), Activation::Relu).item() == 2.0);
}

TEST_CASE("sigmoid gradient at zero is 1/4", "[tensor]") {
    Tensor x = Tensor::scalar(0.0);
    x.set_requires_grad(true);
    Tape tape;
    Tensor y = sum_all(sigmoid(x));
    tape.backward(y);
    CHECK(x.grad()[0] == 0.25);
}

TEST_CASE("concat and split basics", "[tensor]") {
    Tensor a = Tensor::from({2}, {1, 2});
    Tensor b = Tensor::from({1}, {3});
    CHECK(concat({a, b}, 0).values() == std::vector<double>{1, 2, 3});

    Tensor x = Tensor::from({4}, {1, 2, 3, 4});
    auto parts = split(x, 2, 0);
    CHECK(parts[0].values() == std::vector<double>{1, 2});
    CHECK(parts[1].values() == std::vector<double>{3, 4});

    CHECK_THROWS_AS(split(x, 3, 0), IndivisibleSplit);
    Tensor bad = Tensor::from({2, 2}, {1, 2, 3, 4});
    CHECK_THROWS_AS(concat({a, bad}, 0), ShapeMismatch);
}

TEST_CASE("split of concat is the exact identity on random shapes", "[tensor][property]") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const int c = rng.uniform_int(1, 4) * 2;
        const int h = rng.uniform_int(1, 5);
        const int w = rng.uniform_int(1, 5);
        const int axis = rng.uniform_int(0, 2);
        Shape shape{c, h, w};
        if (shape[static_cast<size_t>(axis)] % 2 != 0) shape[static_cast<size_t>(axis)] *= 2;
        Tensor x = Tensor::randn(shape, rng);
        auto parts = split(x, 2, axis);
        Tensor back = concat(parts, axis);
        CHECK(back.values() == x.values()); // bit-identical
    }
}

TEST_CASE("same-size bilinear resize is the exact identity", "[tensor]") {
    Rng rng(7);
    Tensor x = Tensor::randn({3, 5, 4}, rng);
    Tensor y = resize_bilinear(x, 5, 4);
    CHECK(y.values() == x.values());
}

TEST_CASE("bilinear resize of a constant map is constant", "[tensor]") {
    Tensor x = Tensor::full({2, 3, 3}, 0.37);
    for (auto [h, w] : {std::pair{7, 5}, std::pair{2, 9}, std::pair{1, 1}}) {
        Tensor y = resize_bilinear(x, h, w);
        for (double v : y.values()) CHECK(v == Approx(0.37).margin(1e-15));
    }
}

TEST_CASE("2x2 to 1x1 bilinear resize averages the four pixels", "[tensor]") {
    Tensor x = Tensor::from({1, 2, 2}, {1.0, 3.0, 5.0, 9.0});
    // align_corners=false: the single output center maps to source (0.5, 0.5),
    // giving weight 1/4 on each input pixel
    Tensor y = resize_bilinear(x, 1, 1);
    CHECK(y.values()[0] == Approx((1.0 + 3.0 + 5.0 + 9.0) / 4.0).margin(1e-15));
}

TEST_CASE("forward passes are bit-deterministic", "[tensor][property]") {
    auto run = [] {
        Rng rng(123);
        Tensor x = Tensor::randn({4, 6, 6}, rng);
        Tensor w = Tensor::randn({3, 4, 3, 3}, rng);
        Tensor b = Tensor::randn({3}, rng);
        Tensor y = relu(conv2d(x, w, b, 1, 1));
        Tensor t = softmax_rows(reshape(y, {3, 36}));
        return mean_all(t).item();
    };
    const double a = run();
    const double b = run();
    CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
}
