// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace orsiflow {

struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& what) : std::runtime_error("ShapeMismatch: " + what) {}
};

struct IndivisibleSplit : std::runtime_error {
    explicit IndivisibleSplit(const std::string& what) : std::runtime_error("IndivisibleSplit: " + what) {}
};

struct NotScalar : std::runtime_error {
    explicit NotScalar(const std::string& what) : std::runtime_error("NotScalar: " + what) {}
};

struct DetachedGraph : std::runtime_error {
    explicit DetachedGraph(const std::string& what) : std::runtime_error("DetachedGraph: " + what) {}
};

struct OutOfRange : std::runtime_error {
    explicit OutOfRange(const std::string& what) : std::runtime_error("OutOfRange: " + what) {}
};

struct MissingGrad : std::runtime_error {
    explicit MissingGrad(const std::string& what) : std::runtime_error("MissingGrad: " + what) {}
};

struct NonFiniteState : std::runtime_error {
    explicit NonFiniteState(const std::string& what) : std::runtime_error("NonFiniteState: " + what) {}
};

struct NonFiniteLoss : std::runtime_error {
    explicit NonFiniteLoss(const std::string& what) : std::runtime_error("NonFiniteLoss: " + what) {}
};

struct DegenerateTrajectory : std::runtime_error {
    explicit DegenerateTrajectory(const std::string& what) : std::runtime_error("DegenerateTrajectory: " + what) {}
};

struct EmptyGroundTruth : std::runtime_error {
    explicit EmptyGroundTruth(const std::string& what) : std::runtime_error("EmptyGroundTruth: " + what) {}
};

struct UnreadableImage : std::runtime_error {
    explicit UnreadableImage(const std::string& what) : std::runtime_error("UnreadableImage: " + what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error("IoError: " + what) {}
};

struct MissingPair : std::runtime_error {
    explicit MissingPair(const std::string& what) : std::runtime_error("MissingPair: " + what) {}
};

struct InvalidSpec : std::runtime_error {
    explicit InvalidSpec(const std::string& what) : std::runtime_error("InvalidSpec: " + what) {}
};

struct MissingVae : std::runtime_error {
    explicit MissingVae(const std::string& what) : std::runtime_error("MissingVae: " + what) {}
};

struct MissingCheckpoint : std::runtime_error {
    explicit MissingCheckpoint(const std::string& what) : std::runtime_error("MissingCheckpoint: " + what) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error("ConfigError: " + what) {}
};

} // namespace orsiflow
