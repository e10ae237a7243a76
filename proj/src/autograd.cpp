// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "kronlora/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "kronlora/errors.hpp"

namespace kronlora {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_loss_shape(const LossSpec& loss, const DenseMatrix& output) {
    if (loss.targets.rows() != output.rows() || loss.targets.cols() != output.cols()) {
        throw ShapeError("loss targets " + loss.targets.shape_string() + " do not match output " +
                         output.shape_string());
    }
}

struct BranchGrads {
    std::vector<std::pair<std::string, DenseMatrix>> params;
    DenseMatrix input; // gradient w.r.t. the branch input x~
};

// `g` already includes the output scale.
BranchGrads lora_backward(const LoRAAdapter& ad, const DenseMatrix& xt, const DenseMatrix& g) {
    const DenseMatrix hidden = matmul(ad.down, xt);  // r x batch
    DenseMatrix d_up = matmul_nt(g, hidden);         // d_out x r
    const DenseMatrix g_hidden = matmul_tn(ad.up, g); // r x batch
    DenseMatrix d_down = matmul_nt(g_hidden, xt);    // r x d_in
    return {{{"down", std::move(d_down)}, {"up", std::move(d_up)}}, matmul_tn(ad.down, g_hidden)};
}

BranchGrads krona_backward(const KronAAdapter& ad, const DenseMatrix& xt, const DenseMatrix& g) {
    const AdapterPlan& p = ad.plan;
    DenseMatrix d_a(p.a2, p.a1);
    DenseMatrix d_b(p.b2, p.b1);
    DenseMatrix d_x(p.d_in, xt.cols());
    for (std::size_t col = 0; col < xt.cols(); ++col) {
        const DenseMatrix x = vec_reshape(slice_columns(xt, col, 1), p.b1, p.a1);
        const DenseMatrix y1 = matmul(ad.b, x);                               // b2 x a1
        const DenseMatrix g2 = vec_reshape(slice_columns(g, col, 1), p.b2, p.a2); // b2 x a2
        add_in_place(d_a, matmul_tn(g2, y1));                                 // a2 x a1
        const DenseMatrix g1 = matmul(g2, ad.a);                              // b2 x a1
        add_in_place(d_b, matmul_nt(g1, x));                                  // b2 x b1
        set_column(d_x, col, vec_flatten(matmul_tn(ad.b, g1)));
    }
    return {{{"A", std::move(d_a)}, {"B", std::move(d_b)}}, std::move(d_x)};
}

BranchGrads kronlora_backward(const KronLoRAAdapter& ad, const DenseMatrix& xt, const DenseMatrix& g) {
    const AdapterPlan& p = ad.plan;
    DenseMatrix d_a(p.a2, p.a1);
    DenseMatrix d_b1(p.b2, p.r);
    DenseMatrix d_b2(p.r, p.b1);
    DenseMatrix d_x(p.d_in, xt.cols());
    for (std::size_t col = 0; col < xt.cols(); ++col) {
        const DenseMatrix x = vec_reshape(slice_columns(xt, col, 1), p.b1, p.a1);
        const DenseMatrix y1 = matmul(ad.b2, x);                              // r x a1
        const DenseMatrix y2 = matmul_nt(y1, ad.a);                           // r x a2
        const DenseMatrix g3 = vec_reshape(slice_columns(g, col, 1), p.b2, p.a2); // b2 x a2
        add_in_place(d_b1, matmul_nt(g3, y2));                                // b2 x r
        const DenseMatrix g2 = matmul_tn(ad.b1, g3);                          // r x a2
        add_in_place(d_a, matmul_tn(g2, y1));                                 // a2 x a1
        const DenseMatrix g1 = matmul(g2, ad.a);                              // r x a1
        add_in_place(d_b2, matmul_nt(g1, x));                                 // r x b1
        set_column(d_x, col, vec_flatten(matmul_tn(ad.b2, g1)));
    }
    return {{{"A", std::move(d_a)}, {"B1", std::move(d_b1)}, {"B2", std::move(d_b2)}}, std::move(d_x)};
}

void multiply_in_place(DenseMatrix& target, const DenseMatrix& mask) {
    auto dst = target.data();
    const auto m = mask.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] *= m[i];
    }
}

} // namespace

DenseMatrix softmax_columns(const DenseMatrix& logits) {
    DenseMatrix probs(logits.rows(), logits.cols());
    for (std::size_t b = 0; b < logits.cols(); ++b) {
        double peak = logits(0, b);
        for (std::size_t c = 1; c < logits.rows(); ++c) {
            peak = std::max(peak, logits(c, b));
        }
        double total = 0.0;
        for (std::size_t c = 0; c < logits.rows(); ++c) {
            probs(c, b) = std::exp(logits(c, b) - peak);
            total += probs(c, b);
        }
        for (std::size_t c = 0; c < logits.rows(); ++c) {
            probs(c, b) /= total;
        }
    }
    return probs;
}

double evaluate_loss(const LossSpec& loss, const DenseMatrix& output) {
    check_loss_shape(loss, output);
    if (loss.kind == LossKind::MSE) {
        double acc = 0.0;
        const auto y = output.data();
        const auto t = loss.targets.data();
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double d = y[i] - t[i];
            acc += d * d;
        }
        return acc / static_cast<double>(y.size());
    }
    double acc = 0.0;
    for (std::size_t b = 0; b < output.cols(); ++b) {
        double peak = output(0, b);
        for (std::size_t c = 1; c < output.rows(); ++c) {
            peak = std::max(peak, output(c, b));
        }
        double total = 0.0;
        for (std::size_t c = 0; c < output.rows(); ++c) {
            total += std::exp(output(c, b) - peak);
        }
        const double log_norm = peak + std::log(total);
        for (std::size_t c = 0; c < output.rows(); ++c) {
            acc -= loss.targets(c, b) * (output(c, b) - log_norm);
        }
    }
    return acc / static_cast<double>(output.cols());
}

DenseMatrix loss_gradient(const LossSpec& loss, const DenseMatrix& output) {
    check_loss_shape(loss, output);
    if (loss.kind == LossKind::MSE) {
        DenseMatrix g = subtract(output, loss.targets);
        return scaled(g, 2.0 / static_cast<double>(output.size()));
    }
    DenseMatrix g = softmax_columns(output);
    const double inv_batch = 1.0 / static_cast<double>(output.cols());
    for (std::size_t b = 0; b < output.cols(); ++b) {
        double mass = 0.0;
        for (std::size_t c = 0; c < output.rows(); ++c) {
            mass += loss.targets(c, b);
        }
        for (std::size_t c = 0; c < output.rows(); ++c) {
            g(c, b) = (g(c, b) * mass - loss.targets(c, b)) * inv_batch;
        }
    }
    return g;
}

const DenseMatrix& GradientSet::at(std::string_view name) const {
    for (const auto& [n, m] : entries) {
        if (n == name) {
            return m;
        }
    }
    throw StateError("gradient set has no entry '" + std::string(name) + "'");
}

bool GradientSet::contains(std::string_view name) const noexcept {
    return std::any_of(entries.begin(), entries.end(), [name](const auto& e) { return e.first == name; });
}

BackwardResult backward(Adapter& adapter, const FrozenLinear& layer, const DenseMatrix& x,
                        const DenseMatrix& upstream) {
    const AdapterPlan& plan = plan_of(adapter);
    if (x.rows() != plan.d_in || layer.d_in() != plan.d_in || layer.d_out() != plan.d_out) {
        throw ShapeError("backward: input " + x.shape_string() + " / layer " + layer.weight().shape_string() +
                         " do not match the adapter plan");
    }
    if (upstream.rows() != plan.d_out || upstream.cols() != x.cols()) {
        throw ShapeError("backward: upstream " + upstream.shape_string() + " does not match output (" +
                         std::to_string(plan.d_out) + "x" + std::to_string(x.cols()) + ")");
    }
    AdapterState& st = state_of(adapter);
    DenseMatrix xt = x;
    std::optional<DenseMatrix> mask;
    if (st.training_mode) {
        if (!st.dropout_mask) {
            throw StateError("backward in training mode needs the dropout mask of a preceding forward");
        }
        if (st.dropout_mask->rows() != x.rows() || st.dropout_mask->cols() != x.cols()) {
            throw StateError("cached dropout mask " + st.dropout_mask->shape_string() + " does not match input " +
                             x.shape_string());
        }
        mask = std::move(st.dropout_mask);
        st.dropout_mask.reset();
        multiply_in_place(xt, *mask);
    }

    const DenseMatrix g = scaled(upstream, plan.scale());
    BranchGrads branch = std::visit(overloaded{
                                        [&](const LoRAAdapter& ad) { return lora_backward(ad, xt, g); },
                                        [&](const KronAAdapter& ad) { return krona_backward(ad, xt, g); },
                                        [&](const KronLoRAAdapter& ad) { return kronlora_backward(ad, xt, g); },
                                    },
                                    std::as_const(adapter));
    if (mask) {
        multiply_in_place(branch.input, *mask);
    }
    BackwardResult result;
    result.params.entries = std::move(branch.params);
    result.input = matmul_tn(layer.weight(), upstream);
    add_in_place(result.input, branch.input);
    return result;
}

DenseMatrix finite_difference_grad(const Adapter& adapter, const FrozenLinear& layer, const DenseMatrix& x,
                                   const LossSpec& loss, std::string_view param_name, double h) {
    if (!(h > 0.0)) {
        throw ConfigError("finite difference step must be positive");
    }
    Adapter probe = adapter;
    set_training_mode(probe, false);
    DenseMatrix* target = nullptr;
    for (const ParamRef& p : trainable_parameters(probe)) {
        if (p.name == param_name) {
            target = p.value;
        }
    }
    if (target == nullptr) {
        throw StateError("adapter has no parameter '" + std::string(param_name) + "'");
    }
    DenseMatrix grad(target->rows(), target->cols());
    auto values = target->data();
    auto out = grad.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + h;
        const double plus = evaluate_loss(loss, forward_inference(probe, layer, x));
        values[i] = saved - h;
        const double minus = evaluate_loss(loss, forward_inference(probe, layer, x));
        values[i] = saved;
        out[i] = (plus - minus) / (2.0 * h);
    }
    return grad;
}

GradientSet loss_and_grad(Adapter& adapter, const FrozenLinear& layer, const DenseMatrix& x, const LossSpec& loss,
                          Rng& rng) {
    const DenseMatrix output = forward(adapter, layer, x, rng);
    const double value = evaluate_loss(loss, output);
    BackwardResult result = backward(adapter, layer, x, loss_gradient(loss, output));
    result.params.loss_value = value;
    return std::move(result.params);
}

} // namespace kronlora
