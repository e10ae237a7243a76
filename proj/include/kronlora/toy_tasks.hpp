// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "kronlora/adapters.hpp"
#include "kronlora/dense_matrix.hpp"

namespace kronlora {

enum class ToyTaskKind {
    TeacherRegression,     // y = W x + b + dW* x with dW* expanded from a hidden adapter
    ClusterClassification, // Gaussian clusters, labelled by cluster id
};

std::string_view to_string(ToyTaskKind kind) noexcept;
ToyTaskKind parse_toy_task_kind(std::string_view text);

/// Examples are columns.
struct DataSplit {
    DenseMatrix inputs;               // d_in x n
    DenseMatrix targets;              // d_out x n (regression) or n_classes x n one-hot
    std::vector<std::size_t> labels;  // classification only

    std::size_t size() const noexcept { return inputs.cols(); }
};

struct SplitSizes {
    std::size_t train = 400;
    std::size_t val = 100;
    std::size_t test = 200;
};

struct ToyTask {
    ToyTaskKind kind = ToyTaskKind::TeacherRegression;
    std::uint64_t seed = 0;
    std::size_t d_in = 0;
    std::size_t output_dim = 0; // d_out for regression, n_classes for classification
    std::optional<DenseMatrix> teacher_delta;
    DataSplit train;
    DataSplit val;
    DataSplit test;
};

/// The teacher is the adapter `init_adapter(plan, Rng(init_seed))` would
/// produce, with every factor entry perturbed by N(0, perturbation^2). A student
/// initialised from the same seed therefore starts a bounded distance from a
/// target that lies inside its own hypothesis class.
ToyTask make_teacher_regression(const FrozenLinear& layer, const AdapterPlan& plan, std::uint64_t init_seed,
                                std::uint64_t task_seed, const SplitSizes& sizes = {}, double perturbation = 0.01);

/// Class centres ~ N(0, separation^2) per coordinate; samples add N(0, 1) noise.
ToyTask make_cluster_classification(std::size_t d_in, std::size_t n_classes, std::uint64_t seed,
                                    const SplitSizes& sizes = {}, double separation = 0.6);

} // namespace kronlora
