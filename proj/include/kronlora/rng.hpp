// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>

#include "kronlora/dense_matrix.hpp"

namespace kronlora {

/// Counter-based splittable generator. Draw i of a stream is mix(key + i * gamma)
/// (the SplitMix64 construction), so two streams with the same key and call
/// sequence agree bit for bit on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) noexcept;

    std::uint64_t next_u64() noexcept;
    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() noexcept;
    // Uniform integer in [0, bound); bound must be > 0.
    std::uint64_t uniform_index(std::uint64_t bound) noexcept;
    // Box-Muller; the second variate of each pair is cached.
    double normal(double mean = 0.0, double stddev = 1.0) noexcept;

    DenseMatrix normal_matrix(std::size_t rows, std::size_t cols, double stddev = 1.0);

    /// Independent child stream; does not advance this stream.
    Rng split(std::uint64_t stream_id) const noexcept;

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    std::optional<double> spare_normal_;
};

} // namespace kronlora
