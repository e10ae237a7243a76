// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kronlora/adapters.hpp"
#include "kronlora/dense_matrix.hpp"
#include "kronlora/rng.hpp"

namespace kronlora {

enum class LossKind {
    MSE,       // mean over every output entry of (y - t)^2
    SoftmaxCE, // mean over batch columns of -sum_c t_c log softmax(y)_c
};

struct LossSpec {
    LossKind kind = LossKind::MSE;
    DenseMatrix targets; // same shape as the model output (one-hot columns for SoftmaxCE)
};

double evaluate_loss(const LossSpec& loss, const DenseMatrix& output);
DenseMatrix loss_gradient(const LossSpec& loss, const DenseMatrix& output);
// Column-wise softmax of a (classes x batch) logit matrix.
DenseMatrix softmax_columns(const DenseMatrix& logits);

/// Gradients for exactly the tensors returned by trainable_parameters(), in the same order.
struct GradientSet {
    std::vector<std::pair<std::string, DenseMatrix>> entries;
    double loss_value = 0.0;

    const DenseMatrix& at(std::string_view name) const;
    bool contains(std::string_view name) const noexcept;
};

struct BackwardResult {
    GradientSet params;
    DenseMatrix input; // dL/dx, d_in x batch
};

/// Reverse pass through W x + scale * branch(x~) for upstream = dL/dOut.
/// Batch columns accumulate by summation. In training mode the dropout mask
/// cached by the preceding forward is replayed and then released.
BackwardResult backward(Adapter& adapter, const FrozenLinear& layer, const DenseMatrix& x,
                        const DenseMatrix& upstream);

/// Central differences (L(theta + h e_ij) - L(theta - h e_ij)) / 2h with dropout disabled.
DenseMatrix finite_difference_grad(const Adapter& adapter, const FrozenLinear& layer, const DenseMatrix& x,
                                   const LossSpec& loss, std::string_view param_name, double h = 1e-5);

/// forward + loss + backward. Draws a dropout mask from `rng` in training mode.
GradientSet loss_and_grad(Adapter& adapter, const FrozenLinear& layer, const DenseMatrix& x, const LossSpec& loss,
                          Rng& rng);

} // namespace kronlora
