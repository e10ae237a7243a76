// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "kronlora/rng.hpp"

#include <cmath>
#include <numbers>

namespace kronlora {

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace

Rng::Rng(std::uint64_t seed) noexcept : key_(mix64(seed ^ 0x6A09E667F3BCC909ULL)) {}

std::uint64_t Rng::next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGamma);
}

double Rng::uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

__extension__ using Uint128 = unsigned __int128;

std::uint64_t Rng::uniform_index(std::uint64_t bound) noexcept {
    const auto wide = static_cast<Uint128>(next_u64()) * bound;
    return static_cast<std::uint64_t>(wide >> 64);
}

double Rng::normal(double mean, double stddev) noexcept {
    if (spare_normal_) {
        const double z = *spare_normal_;
        spare_normal_.reset();
        return mean + stddev * z;
    }
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_normal_ = radius * std::sin(angle);
    return mean + stddev * radius * std::cos(angle);
}

DenseMatrix Rng::normal_matrix(std::size_t rows, std::size_t cols, double stddev) {
    DenseMatrix m(rows, cols);
    for (double& v : m.data()) {
        v = normal(0.0, stddev);
    }
    return m;
}

Rng Rng::split(std::uint64_t stream_id) const noexcept {
    Rng child(0);
    child.key_ = mix64(key_ ^ mix64(stream_id + kGamma));
    return child;
}

} // namespace kronlora
