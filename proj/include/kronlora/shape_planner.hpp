// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kronlora {

enum class AdapterKind : std::uint8_t {
    LoRA = 1,
    KronA = 2,
    KronLoRA = 3,
};

std::string_view to_string(AdapterKind kind) noexcept;
// Accepts "lora", "krona", "kronlora" (case-insensitive, '-' and '_' ignored).
AdapterKind parse_adapter_kind(std::string_view text);

struct LayerSpec {
    std::size_t d_in = 0;
    std::size_t d_out = 0;
    bool is_vocab_projection = false;
};

inline constexpr double kDefaultAlpha = 32.0;
inline constexpr double kDefaultDropout = 0.1;
inline constexpr std::size_t kDefaultTargetSlice = 200;

/// Resolved shapes for one adapted layer.
///
/// Kronecker kinds factor the update as A (a2 x a1) (x) B (b2 x b1), so
/// a1 * b1 == d_in and a2 * b2 == d_out. LoRA leaves the a*/b* fields at zero.
/// KronA has no rank; its plans carry r = 1 so the output scale alpha / r is alpha.
struct AdapterPlan {
    AdapterKind kind = AdapterKind::KronLoRA;
    std::size_t d_in = 0;
    std::size_t d_out = 0;
    std::size_t a1 = 0;
    std::size_t a2 = 0;
    std::size_t b1 = 0;
    std::size_t b2 = 0;
    std::size_t r = 0;
    double alpha = kDefaultAlpha;
    double dropout_p = kDefaultDropout;
    // Set when a dimension only admits the trivial 1 x d factorization.
    bool degenerate_factorization = false;

    double scale() const noexcept { return alpha / static_cast<double>(r); }
    bool operator==(const AdapterPlan&) const = default;
};

struct KronLoRAPlanOptions {
    // Desired slice height b2 = d_out / a2.
    std::size_t target_slice = kDefaultTargetSlice;
    // Pins a2 for non-vocabulary layers instead of searching (e.g. 4 or 16).
    std::optional<std::size_t> fixed_a2;
    double alpha = kDefaultAlpha;
    double dropout_p = kDefaultDropout;
};

std::vector<std::size_t> divisors(std::size_t n);

AdapterPlan plan_kron_lora(const LayerSpec& layer, std::size_t r, const KronLoRAPlanOptions& options = {});
AdapterPlan plan_krona(const LayerSpec& layer, double alpha = kDefaultAlpha, double dropout_p = kDefaultDropout);
AdapterPlan plan_lora(const LayerSpec& layer, std::size_t r, double alpha = kDefaultAlpha,
                      double dropout_p = kDefaultDropout);

/// Builds a Kronecker plan from explicit factor sizes; validates like the planners.
AdapterPlan make_kron_plan(AdapterKind kind, std::size_t a1, std::size_t a2, std::size_t b1, std::size_t b2,
                           std::size_t r, double alpha = kDefaultAlpha, double dropout_p = kDefaultDropout);

std::size_t param_count(const AdapterPlan& plan);

/// Throws PlanningError naming the first violated invariant.
void validate_plan(const AdapterPlan& plan);

} // namespace kronlora
