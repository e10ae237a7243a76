// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "kronlora/optimizer.hpp"

#include <cmath>

#include "kronlora/errors.hpp"

namespace kronlora {

OptimizerState OptimizerState::for_parameters(std::span<const ParamRef> params, const AdamWHyperParams& hyper) {
    OptimizerState state;
    state.hyper = hyper;
    for (const ParamRef& p : params) {
        state.first_moment.emplace_back(p.value->rows(), p.value->cols());
        state.second_moment.emplace_back(p.value->rows(), p.value->cols());
    }
    return state;
}

void adamw_step(std::span<const ParamRef> params, const GradientSet& grads, OptimizerState& state, double lr_t) {
    if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
        throw ShapeError("optimizer state tracks " + std::to_string(state.first_moment.size()) +
                         " tensors but " + std::to_string(params.size()) + " parameters were given");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const DenseMatrix& g = grads.at(params[i].name);
        const DenseMatrix& theta = *params[i].value;
        if (g.rows() != theta.rows() || g.cols() != theta.cols() || state.first_moment[i].rows() != theta.rows() ||
            state.first_moment[i].cols() != theta.cols()) {
            throw ShapeError("adamw: shape mismatch for '" + params[i].name + "': parameter " +
                             theta.shape_string() + ", gradient " + g.shape_string() + ", moment " +
                             state.first_moment[i].shape_string());
        }
    }

    const AdamWHyperParams& h = state.hyper;
    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const double bias1 = 1.0 - std::pow(h.beta1, t);
    const double bias2 = 1.0 - std::pow(h.beta2, t);
    const double decay = 1.0 - lr_t * h.weight_decay;

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto theta = params[i].value->data();
        const auto g = grads.at(params[i].name).data();
        auto m = state.first_moment[i].data();
        auto v = state.second_moment[i].data();
        for (std::size_t j = 0; j < theta.size(); ++j) {
            m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
            v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
            const double m_hat = m[j] / bias1;
            const double v_hat = v[j] / bias2;
            theta[j] *= decay;
            theta[j] -= lr_t * m_hat / (std::sqrt(v_hat) + h.eps);
        }
    }
}

double linear_schedule(std::uint64_t step, std::uint64_t total_steps, double base_lr) {
    if (total_steps == 0) {
        throw ConfigError("linear_schedule: total_steps must be > 0");
    }
    if (step > total_steps) {
        throw ConfigError("linear_schedule: step " + std::to_string(step) + " beyond horizon " +
                          std::to_string(total_steps));
    }
    return base_lr * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
}

} // namespace kronlora
