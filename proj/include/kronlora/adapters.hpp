// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "kronlora/dense_matrix.hpp"
#include "kronlora/rng.hpp"
#include "kronlora/shape_planner.hpp"

namespace kronlora {

/// Pre-trained linear map y = W x + b. Has no mutators.
class FrozenLinear {
public:
    explicit FrozenLinear(DenseMatrix weight, std::optional<DenseMatrix> bias = std::nullopt);

    const DenseMatrix& weight() const noexcept { return weight_; }
    const std::optional<DenseMatrix>& bias() const noexcept { return bias_; }
    std::size_t d_in() const noexcept { return weight_.cols(); }
    std::size_t d_out() const noexcept { return weight_.rows(); }

    // x is d_in x batch.
    DenseMatrix apply(const DenseMatrix& x) const;

private:
    DenseMatrix weight_;
    std::optional<DenseMatrix> bias_;
};

// Shared by all adapter kinds: inverted-dropout mask (d_in x batch) left by the
// last training-mode forward and consumed by the matching backward.
struct AdapterState {
    bool training_mode = false;
    std::optional<DenseMatrix> dropout_mask;
};

/// delta W = (alpha / r) * up * down.
struct LoRAAdapter {
    AdapterPlan plan;
    DenseMatrix down; // r x d_in
    DenseMatrix up;   // d_out x r
    AdapterState state;
};

/// delta W = alpha * (A (x) B).
struct KronAAdapter {
    AdapterPlan plan;
    DenseMatrix a; // a2 x a1
    DenseMatrix b; // b2 x b1
    AdapterState state;
};

/// delta W = (alpha / r) * (A (x) (B1 B2)).
struct KronLoRAAdapter {
    AdapterPlan plan;
    DenseMatrix a;  // a2 x a1
    DenseMatrix b1; // b2 x r
    DenseMatrix b2; // r x b1
    AdapterState state;
};

using Adapter = std::variant<LoRAAdapter, KronAAdapter, KronLoRAAdapter>;

const AdapterPlan& plan_of(const Adapter& adapter) noexcept;
AdapterKind kind_of(const Adapter& adapter) noexcept;
AdapterState& state_of(Adapter& adapter) noexcept;
const AdapterState& state_of(const Adapter& adapter) noexcept;
void set_training_mode(Adapter& adapter, bool training);

struct ParamRef {
    std::string name;
    DenseMatrix* value;
};

struct ConstParamRef {
    std::string name;
    const DenseMatrix* value;
};

/// Trainable tensors in a stable order: (A, B1, B2), (A, B) or (down, up).
std::vector<ParamRef> trainable_parameters(Adapter& adapter);
std::vector<ConstParamRef> trainable_parameters(const Adapter& adapter);
std::vector<std::string> parameter_names(AdapterKind kind);
// Expected (rows, cols) of each trainable tensor, in trainable_parameters order.
std::vector<std::pair<std::size_t, std::size_t>> parameter_shapes(const AdapterPlan& plan);

/// Random factors with one factor zeroed so the initial delta W is exactly 0.
Adapter init_adapter(const AdapterPlan& plan, Rng& rng);

/// Assembles an adapter from explicit tensors (given in trainable_parameters order).
Adapter make_adapter(const AdapterPlan& plan, std::vector<DenseMatrix> tensors);

/// Checks the plan and every tensor shape; throws ShapeError or PlanningError.
void validate_adapter(const Adapter& adapter);

/// Dense d_out x d_in update, including the output scale. Dropout is not applied.
DenseMatrix expand_delta(const Adapter& adapter);

struct MatrixShape {
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool operator==(const MatrixShape&) const = default;
};

/// Per-example shapes of the factored chain intermediates (Y1, Y2, Y3, ...).
struct ForwardTrace {
    std::vector<std::vector<MatrixShape>> per_example;
};

struct ForwardOptions {
    VecOrder vec_order = VecOrder::ColumnMajor;
    ForwardTrace* trace = nullptr;
};

/// W x (+ b) + scale * branch(x~). In training mode x~ is x under a fresh
/// inverted-dropout mask drawn from `rng` and cached for backward.
DenseMatrix forward(Adapter& adapter, const FrozenLinear& layer, const DenseMatrix& x, Rng& rng,
                    const ForwardOptions& options = {});

/// Forward with dropout disabled regardless of the training flag.
DenseMatrix forward_inference(const Adapter& adapter, const FrozenLinear& layer, const DenseMatrix& x,
                              const ForwardOptions& options = {});

/// scale * branch(x) for an already-dropped-out input, without the frozen path.
DenseMatrix adapter_branch(const Adapter& adapter, const DenseMatrix& x, const ForwardOptions& options = {});

DenseMatrix draw_dropout_mask(std::size_t rows, std::size_t cols, double p, Rng& rng);

} // namespace kronlora
