// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "kronlora/shape_planner.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "kronlora/errors.hpp"

namespace kronlora {

namespace {

// Divisor of n whose `key` is smallest; ties resolve to the smaller divisor
// because divisors() is ascending and only strict improvements are taken.
template <typename Key>
std::size_t best_divisor(std::size_t n, Key key) {
    std::size_t best = 1;
    double best_key = std::numeric_limits<double>::infinity();
    for (std::size_t d : divisors(n)) {
        const double k = key(d);
        if (k < best_key) {
            best_key = k;
            best = d;
        }
    }
    return best;
}

std::size_t divisor_nearest(std::size_t n, double value) {
    return best_divisor(n, [value](std::size_t d) { return std::abs(static_cast<double>(d) - value); });
}

std::size_t slice_rule_a2(std::size_t d_out, const KronLoRAPlanOptions& options) {
    if (options.fixed_a2) {
        const std::size_t a2 = *options.fixed_a2;
        if (a2 == 0 || d_out % a2 != 0) {
            throw PlanningError("fixed a2=" + std::to_string(a2) + " does not divide d_out=" + std::to_string(d_out));
        }
        return a2;
    }
    if (options.target_slice == 0) {
        throw PlanningError("target_slice must be >= 1");
    }
    const double target = static_cast<double>(options.target_slice);
    return best_divisor(d_out, [d_out, target](std::size_t a2) {
        return std::abs(static_cast<double>(d_out / a2) - target);
    });
}

void require_layer(const LayerSpec& layer) {
    if (layer.d_in == 0 || layer.d_out == 0) {
        throw PlanningError("layer dimensions must be >= 1, got d_in=" + std::to_string(layer.d_in) +
                            " d_out=" + std::to_string(layer.d_out));
    }
}

} // namespace

std::string_view to_string(AdapterKind kind) noexcept {
    switch (kind) {
    case AdapterKind::LoRA:
        return "lora";
    case AdapterKind::KronA:
        return "krona";
    case AdapterKind::KronLoRA:
        return "kronlora";
    }
    return "unknown";
}

AdapterKind parse_adapter_kind(std::string_view text) {
    std::string norm;
    for (char c : text) {
        if (c == '-' || c == '_') {
            continue;
        }
        norm.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (norm == "lora") {
        return AdapterKind::LoRA;
    }
    if (norm == "krona") {
        return AdapterKind::KronA;
    }
    if (norm == "kronlora") {
        return AdapterKind::KronLoRA;
    }
    throw ConfigError("unknown adapter kind '" + std::string(text) + "' (expected lora, krona or kronlora)");
}

std::vector<std::size_t> divisors(std::size_t n) {
    if (n == 0) {
        throw PlanningError("divisors of 0 are undefined");
    }
    std::vector<std::size_t> low;
    std::vector<std::size_t> high;
    for (std::size_t d = 1; d * d <= n; ++d) {
        if (n % d == 0) {
            low.push_back(d);
            if (d != n / d) {
                high.push_back(n / d);
            }
        }
    }
    low.insert(low.end(), high.rbegin(), high.rend());
    return low;
}

AdapterPlan plan_kron_lora(const LayerSpec& layer, std::size_t r, const KronLoRAPlanOptions& options) {
    require_layer(layer);
    if (r == 0) {
        throw PlanningError("rank r must be >= 1");
    }
    std::size_t a1 = 2;
    std::size_t a2 = slice_rule_a2(layer.d_out, options);
    if (layer.is_vocab_projection) {
        a1 = 1;
        a2 = divisor_nearest(layer.d_out, static_cast<double>(a2) / 2.0);
    } else if (layer.d_in % 2 != 0) {
        throw PlanningError("d_in=" + std::to_string(layer.d_in) +
                            " is odd but non-vocabulary layers use a1=2; mark the layer as a vocabulary "
                            "projection or pad d_in to an even size");
    }
    AdapterPlan plan;
    plan.kind = AdapterKind::KronLoRA;
    plan.d_in = layer.d_in;
    plan.d_out = layer.d_out;
    plan.a1 = a1;
    plan.a2 = a2;
    plan.b1 = layer.d_in / a1;
    plan.b2 = layer.d_out / a2;
    plan.r = r;
    plan.alpha = options.alpha;
    plan.dropout_p = options.dropout_p;
    validate_plan(plan);
    return plan;
}

AdapterPlan plan_krona(const LayerSpec& layer, double alpha, double dropout_p) {
    require_layer(layer);
    const auto near_sqrt = [](std::size_t n) { return divisor_nearest(n, std::sqrt(static_cast<double>(n))); };
    AdapterPlan plan;
    plan.kind = AdapterKind::KronA;
    plan.d_in = layer.d_in;
    plan.d_out = layer.d_out;
    plan.a1 = near_sqrt(layer.d_in);
    plan.a2 = near_sqrt(layer.d_out);
    plan.b1 = layer.d_in / plan.a1;
    plan.b2 = layer.d_out / plan.a2;
    plan.r = 1;
    plan.alpha = alpha;
    plan.dropout_p = dropout_p;
    plan.degenerate_factorization = plan.a1 == 1 || plan.a2 == 1;
    validate_plan(plan);
    return plan;
}

AdapterPlan plan_lora(const LayerSpec& layer, std::size_t r, double alpha, double dropout_p) {
    require_layer(layer);
    AdapterPlan plan;
    plan.kind = AdapterKind::LoRA;
    plan.d_in = layer.d_in;
    plan.d_out = layer.d_out;
    plan.r = r;
    plan.alpha = alpha;
    plan.dropout_p = dropout_p;
    validate_plan(plan);
    return plan;
}

AdapterPlan make_kron_plan(AdapterKind kind, std::size_t a1, std::size_t a2, std::size_t b1, std::size_t b2,
                           std::size_t r, double alpha, double dropout_p) {
    if (kind == AdapterKind::LoRA) {
        throw PlanningError("make_kron_plan requires a Kronecker adapter kind");
    }
    AdapterPlan plan;
    plan.kind = kind;
    plan.a1 = a1;
    plan.a2 = a2;
    plan.b1 = b1;
    plan.b2 = b2;
    plan.d_in = a1 * b1;
    plan.d_out = a2 * b2;
    plan.r = kind == AdapterKind::KronA ? 1 : r;
    plan.alpha = alpha;
    plan.dropout_p = dropout_p;
    plan.degenerate_factorization = kind == AdapterKind::KronA && (a1 == 1 || a2 == 1);
    validate_plan(plan);
    return plan;
}

std::size_t param_count(const AdapterPlan& plan) {
    switch (plan.kind) {
    case AdapterKind::LoRA:
        return plan.r * (plan.d_in + plan.d_out);
    case AdapterKind::KronA:
        return plan.a1 * plan.a2 + plan.b1 * plan.b2;
    case AdapterKind::KronLoRA:
        return plan.a1 * plan.a2 + plan.r * (plan.b2 + plan.b1);
    }
    return 0;
}

void validate_plan(const AdapterPlan& plan) {
    const auto fail = [](const std::string& what) { throw PlanningError("invalid plan: " + what); };
    if (plan.d_in == 0 || plan.d_out == 0) {
        fail("d_in and d_out must be >= 1");
    }
    if (plan.r == 0) {
        fail("r must be >= 1");
    }
    if (!(plan.alpha > 0.0) || !std::isfinite(plan.alpha)) {
        fail("alpha must be positive and finite");
    }
    if (!(plan.dropout_p >= 0.0 && plan.dropout_p < 1.0)) {
        fail("dropout_p must lie in [0, 1)");
    }
    switch (plan.kind) {
    case AdapterKind::LoRA:
        if (plan.a1 != 0 || plan.a2 != 0 || plan.b1 != 0 || plan.b2 != 0) {
            fail("LoRA plans leave the Kronecker factor sizes at 0");
        }
        break;
    case AdapterKind::KronA:
    case AdapterKind::KronLoRA:
        if (plan.a1 == 0 || plan.a2 == 0 || plan.b1 == 0 || plan.b2 == 0) {
            fail("Kronecker factor sizes must be >= 1");
        }
        if (plan.a1 * plan.b1 != plan.d_in) {
            fail("a1*b1=" + std::to_string(plan.a1 * plan.b1) + " != d_in=" + std::to_string(plan.d_in));
        }
        if (plan.a2 * plan.b2 != plan.d_out) {
            fail("a2*b2=" + std::to_string(plan.a2 * plan.b2) + " != d_out=" + std::to_string(plan.d_out));
        }
        if (plan.kind == AdapterKind::KronA && plan.r != 1) {
            fail("KronA plans carry r=1");
        }
        break;
    default:
        fail("unknown adapter kind");
    }
}

} // namespace kronlora
