// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "kronlora/adapters.hpp"

#include <cmath>
#include <utility>

#include "kronlora/errors.hpp"

namespace kronlora {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_input(const AdapterPlan& plan, const DenseMatrix& x) {
    if (x.rows() != plan.d_in) {
        throw ShapeError("adapter expects input with " + std::to_string(plan.d_in) + " rows, got " +
                         x.shape_string());
    }
}

void check_layer(const AdapterPlan& plan, const FrozenLinear& layer) {
    if (layer.d_in() != plan.d_in || layer.d_out() != plan.d_out) {
        throw ShapeError("frozen layer " + layer.weight().shape_string() + " does not match adapter plan (" +
                         std::to_string(plan.d_out) + "x" + std::to_string(plan.d_in) + ")");
    }
}

void check_dropout(const AdapterPlan& plan) {
    if (!(plan.dropout_p >= 0.0 && plan.dropout_p < 1.0)) {
        throw ConfigError("dropout_p=" + std::to_string(plan.dropout_p) + " outside [0, 1)");
    }
}

void check_tensor(const DenseMatrix& m, std::size_t rows, std::size_t cols, const std::string& name) {
    if (m.rows() != rows || m.cols() != cols) {
        throw ShapeError("tensor '" + name + "' has shape " + m.shape_string() + ", plan requires (" +
                         std::to_string(rows) + "x" + std::to_string(cols) + ")");
    }
}

DenseMatrix lora_branch(const LoRAAdapter& ad, const DenseMatrix& x, ForwardTrace* trace) {
    const DenseMatrix hidden = matmul(ad.down, x);
    if (trace != nullptr) {
        for (std::size_t b = 0; b < x.cols(); ++b) {
            trace->per_example.push_back({{ad.plan.r, 1}});
        }
    }
    return scaled(matmul(ad.up, hidden), ad.plan.scale());
}

DenseMatrix krona_branch(const KronAAdapter& ad, const DenseMatrix& x, const ForwardOptions& options) {
    const AdapterPlan& p = ad.plan;
    DenseMatrix out(p.d_out, x.cols());
    for (std::size_t b = 0; b < x.cols(); ++b) {
        const DenseMatrix xr = vec_reshape(slice_columns(x, b, 1), p.b1, p.a1, options.vec_order);
        const DenseMatrix y1 = matmul(ad.b, xr);    // b2 x a1
        const DenseMatrix y2 = matmul_nt(y1, ad.a); // b2 x a2
        set_column(out, b, vec_flatten(y2, options.vec_order));
        if (options.trace != nullptr) {
            options.trace->per_example.push_back({{y1.rows(), y1.cols()}, {y2.rows(), y2.cols()}});
        }
    }
    return scaled(out, p.scale());
}

DenseMatrix kronlora_branch(const KronLoRAAdapter& ad, const DenseMatrix& x, const ForwardOptions& options) {
    const AdapterPlan& p = ad.plan;
    DenseMatrix out(p.d_out, x.cols());
    for (std::size_t b = 0; b < x.cols(); ++b) {
        const DenseMatrix xr = vec_reshape(slice_columns(x, b, 1), p.b1, p.a1, options.vec_order);
        const DenseMatrix y1 = matmul(ad.b2, xr);   // r x a1
        const DenseMatrix y2 = matmul_nt(y1, ad.a); // r x a2
        const DenseMatrix y3 = matmul(ad.b1, y2);   // b2 x a2
        set_column(out, b, vec_flatten(y3, options.vec_order));
        if (options.trace != nullptr) {
            options.trace->per_example.push_back(
                {{y1.rows(), y1.cols()}, {y2.rows(), y2.cols()}, {y3.rows(), y3.cols()}});
        }
    }
    return scaled(out, p.scale());
}

} // namespace

FrozenLinear::FrozenLinear(DenseMatrix weight, std::optional<DenseMatrix> bias)
    : weight_(std::move(weight)), bias_(std::move(bias)) {
    if (bias_ && (bias_->rows() != weight_.rows() || bias_->cols() != 1)) {
        throw ShapeError("bias " + bias_->shape_string() + " does not match weight " + weight_.shape_string());
    }
}

DenseMatrix FrozenLinear::apply(const DenseMatrix& x) const {
    DenseMatrix y = matmul(weight_, x);
    if (bias_) {
        for (std::size_t i = 0; i < y.rows(); ++i) {
            const double bi = (*bias_)(i, 0);
            for (double& v : y.row(i)) {
                v += bi;
            }
        }
    }
    return y;
}

const AdapterPlan& plan_of(const Adapter& adapter) noexcept {
    return std::visit([](const auto& ad) -> const AdapterPlan& { return ad.plan; }, adapter);
}

AdapterKind kind_of(const Adapter& adapter) noexcept {
    return plan_of(adapter).kind;
}

AdapterState& state_of(Adapter& adapter) noexcept {
    return std::visit([](auto& ad) -> AdapterState& { return ad.state; }, adapter);
}

const AdapterState& state_of(const Adapter& adapter) noexcept {
    return std::visit([](const auto& ad) -> const AdapterState& { return ad.state; }, adapter);
}

void set_training_mode(Adapter& adapter, bool training) {
    AdapterState& st = state_of(adapter);
    st.training_mode = training;
    st.dropout_mask.reset();
}

std::vector<ParamRef> trainable_parameters(Adapter& adapter) {
    return std::visit(overloaded{
                          [](LoRAAdapter& ad) { return std::vector<ParamRef>{{"down", &ad.down}, {"up", &ad.up}}; },
                          [](KronAAdapter& ad) { return std::vector<ParamRef>{{"A", &ad.a}, {"B", &ad.b}}; },
                          [](KronLoRAAdapter& ad) {
                              return std::vector<ParamRef>{{"A", &ad.a}, {"B1", &ad.b1}, {"B2", &ad.b2}};
                          },
                      },
                      adapter);
}

std::vector<ConstParamRef> trainable_parameters(const Adapter& adapter) {
    std::vector<ConstParamRef> out;
    for (const ParamRef& p : trainable_parameters(const_cast<Adapter&>(adapter))) {
        out.push_back({p.name, p.value});
    }
    return out;
}

std::vector<std::string> parameter_names(AdapterKind kind) {
    switch (kind) {
    case AdapterKind::LoRA:
        return {"down", "up"};
    case AdapterKind::KronA:
        return {"A", "B"};
    case AdapterKind::KronLoRA:
        return {"A", "B1", "B2"};
    }
    return {};
}

std::vector<std::pair<std::size_t, std::size_t>> parameter_shapes(const AdapterPlan& plan) {
    switch (plan.kind) {
    case AdapterKind::LoRA:
        return {{plan.r, plan.d_in}, {plan.d_out, plan.r}};
    case AdapterKind::KronA:
        return {{plan.a2, plan.a1}, {plan.b2, plan.b1}};
    case AdapterKind::KronLoRA:
        return {{plan.a2, plan.a1}, {plan.b2, plan.r}, {plan.r, plan.b1}};
    }
    return {};
}

Adapter init_adapter(const AdapterPlan& plan, Rng& rng) {
    validate_plan(plan);
    const double a_std = 1.0 / std::sqrt(static_cast<double>(plan.a1 * plan.a2));
    switch (plan.kind) {
    case AdapterKind::LoRA: {
        LoRAAdapter ad{plan, rng.normal_matrix(plan.r, plan.d_in, 1.0 / std::sqrt(static_cast<double>(plan.d_in))),
                       DenseMatrix(plan.d_out, plan.r), {}};
        return ad;
    }
    case AdapterKind::KronA: {
        KronAAdapter ad{plan, rng.normal_matrix(plan.a2, plan.a1, a_std), DenseMatrix(plan.b2, plan.b1), {}};
        return ad;
    }
    case AdapterKind::KronLoRA: {
        DenseMatrix a = rng.normal_matrix(plan.a2, plan.a1, a_std);
        DenseMatrix b2 = rng.normal_matrix(plan.r, plan.b1, 1.0 / std::sqrt(static_cast<double>(plan.b1)));
        KronLoRAAdapter ad{plan, std::move(a), DenseMatrix(plan.b2, plan.r), std::move(b2), {}};
        return ad;
    }
    }
    throw PlanningError("unknown adapter kind");
}

Adapter make_adapter(const AdapterPlan& plan, std::vector<DenseMatrix> tensors) {
    validate_plan(plan);
    const auto shapes = parameter_shapes(plan);
    const auto names = parameter_names(plan.kind);
    if (tensors.size() != shapes.size()) {
        throw ShapeError(std::string(to_string(plan.kind)) + " adapter needs " + std::to_string(shapes.size()) +
                         " tensors, got " + std::to_string(tensors.size()));
    }
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        check_tensor(tensors[i], shapes[i].first, shapes[i].second, names[i]);
    }
    switch (plan.kind) {
    case AdapterKind::LoRA:
        return LoRAAdapter{plan, std::move(tensors[0]), std::move(tensors[1]), {}};
    case AdapterKind::KronA:
        return KronAAdapter{plan, std::move(tensors[0]), std::move(tensors[1]), {}};
    case AdapterKind::KronLoRA:
        return KronLoRAAdapter{plan, std::move(tensors[0]), std::move(tensors[1]), std::move(tensors[2]), {}};
    }
    throw PlanningError("unknown adapter kind");
}

void validate_adapter(const Adapter& adapter) {
    const AdapterPlan& plan = plan_of(adapter);
    validate_plan(plan);
    const auto shapes = parameter_shapes(plan);
    const auto params = trainable_parameters(adapter);
    for (std::size_t i = 0; i < params.size(); ++i) {
        check_tensor(*params[i].value, shapes[i].first, shapes[i].second, params[i].name);
    }
}

DenseMatrix expand_delta(const Adapter& adapter) {
    return std::visit(overloaded{
                          [](const LoRAAdapter& ad) { return scaled(matmul(ad.up, ad.down), ad.plan.scale()); },
                          [](const KronAAdapter& ad) { return scaled(kron(ad.a, ad.b), ad.plan.scale()); },
                          [](const KronLoRAAdapter& ad) {
                              return scaled(kron(ad.a, matmul(ad.b1, ad.b2)), ad.plan.scale());
                          },
                      },
                      adapter);
}

DenseMatrix adapter_branch(const Adapter& adapter, const DenseMatrix& x, const ForwardOptions& options) {
    check_input(plan_of(adapter), x);
    return std::visit(overloaded{
                          [&](const LoRAAdapter& ad) { return lora_branch(ad, x, options.trace); },
                          [&](const KronAAdapter& ad) { return krona_branch(ad, x, options); },
                          [&](const KronLoRAAdapter& ad) { return kronlora_branch(ad, x, options); },
                      },
                      adapter);
}

DenseMatrix draw_dropout_mask(std::size_t rows, std::size_t cols, double p, Rng& rng) {
    if (!(p >= 0.0 && p < 1.0)) {
        throw ConfigError("dropout_p=" + std::to_string(p) + " outside [0, 1)");
    }
    const double keep_scale = 1.0 / (1.0 - p);
    DenseMatrix mask(rows, cols);
    for (double& v : mask.data()) {
        v = rng.uniform() >= p ? keep_scale : 0.0;
    }
    return mask;
}

DenseMatrix forward(Adapter& adapter, const FrozenLinear& layer, const DenseMatrix& x, Rng& rng,
                    const ForwardOptions& options) {
    AdapterState& st = state_of(adapter);
    if (!st.training_mode) {
        return forward_inference(adapter, layer, x, options);
    }
    const AdapterPlan& plan = plan_of(adapter);
    check_dropout(plan);
    check_input(plan, x);
    check_layer(plan, layer);
    DenseMatrix mask = draw_dropout_mask(x.rows(), x.cols(), plan.dropout_p, rng);
    DenseMatrix dropped = x;
    auto dst = dropped.data();
    const auto m = mask.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] *= m[i];
    }
    DenseMatrix out = layer.apply(x);
    add_in_place(out, adapter_branch(adapter, dropped, options));
    st.dropout_mask = std::move(mask);
    return out;
}

DenseMatrix forward_inference(const Adapter& adapter, const FrozenLinear& layer, const DenseMatrix& x,
                              const ForwardOptions& options) {
    const AdapterPlan& plan = plan_of(adapter);
    check_dropout(plan);
    check_input(plan, x);
    check_layer(plan, layer);
    DenseMatrix out = layer.apply(x);
    add_in_place(out, adapter_branch(adapter, x, options));
    return out;
}

} // namespace kronlora
