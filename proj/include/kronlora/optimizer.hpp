// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kronlora/adapters.hpp"
#include "kronlora/autograd.hpp"

namespace kronlora {

struct AdamWHyperParams {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// Moments mirror the parameter list they were created for, position by position.
struct OptimizerState {
    AdamWHyperParams hyper;
    std::vector<DenseMatrix> first_moment;
    std::vector<DenseMatrix> second_moment;
    std::uint64_t step_count = 0;

    static OptimizerState for_parameters(std::span<const ParamRef> params, const AdamWHyperParams& hyper);
};

/// One decoupled-weight-decay Adam step at learning rate `lr_t`:
///   theta <- theta - lr_t * wd * theta
///   theta <- theta - lr_t * m_hat / (sqrt(v_hat) + eps)
/// Gradients are matched to parameters by name.
void adamw_step(std::span<const ParamRef> params, const GradientSet& grads, OptimizerState& state, double lr_t);

/// base_lr * (1 - step / total_steps), no warmup.
double linear_schedule(std::uint64_t step, std::uint64_t total_steps, double base_lr);

} // namespace kronlora
