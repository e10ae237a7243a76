// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "kronlora/config.hpp"
#include "kronlora/dense_matrix.hpp"
#include "kronlora/shape_planner.hpp"

namespace kronlora {

using Json = nlohmann::json;

std::string_view library_version() noexcept;

struct RunManifest {
    std::string command;
    std::uint64_t seed = 0;
    Json config = Json::object();
    std::string version;
    std::string timestamp; // UTC, ISO-8601
};

RunManifest make_manifest(std::string command, std::uint64_t seed, Json config);
Json to_json(const RunManifest& manifest);

/// Drops fields that legitimately differ between identical runs: the
/// manifest timestamp and every object stored under a "timing" key.
Json strip_volatile(Json report);

// ---- verify ---------------------------------------------------------------

struct SuiteResult {
    std::string name;
    std::size_t cases = 0;
    double max_error = 0.0;
    double threshold = 0.0;
    bool passed = true;
    Json failing_cases = Json::array(); // first few failures, each replayable by (seed, case_index)
    double seconds = 0.0;
};

Json to_json(const SuiteResult& suite);

// Case i of every suite draws from Rng(seed).split(i), so a single failing
// case replays with trials = 1 and first_case = i.
SuiteResult run_oracle_suite(std::uint64_t seed, std::size_t trials, std::size_t first_case = 0,
                             VecOrder order = VecOrder::ColumnMajor);
SuiteResult run_rank_suite(std::uint64_t seed, std::size_t trials, std::size_t first_case = 0);
// Cases cycle through {LoRA, KronA, KronLoRA} x {MSE, SoftmaxCE}.
SuiteResult run_gradient_suite(std::uint64_t seed, std::size_t trials, std::size_t first_case = 0);

inline constexpr double kOracleThreshold = 1e-9;
inline constexpr double kGradientThreshold = 1e-5;
inline constexpr double kRankThreshold = 0.0;

struct VerifyRequest {
    std::size_t trials = 200;
    bool sabotage = false; // row-major vec order: the oracle suite must fail
    std::optional<std::string> only_suite;
    std::size_t first_case = 0;
};

struct CommandResult {
    int exit_code = 0;
    Json report;
};

CommandResult cmd_verify(const VerifyRequest& request, std::uint64_t seed);

// ---- plan -----------------------------------------------------------------

struct PlanRequest {
    LayerSpec layer;
    std::size_t r = 8;
    std::vector<AdapterKind> kinds{AdapterKind::LoRA, AdapterKind::KronA, AdapterKind::KronLoRA};
    std::size_t target_slice = kDefaultTargetSlice;
    std::optional<std::size_t> fixed_a2;
    double alpha = kDefaultAlpha;
    double dropout_p = kDefaultDropout;
};

AdapterPlan plan_for(AdapterKind kind, const PlanRequest& request);
Json to_json(const AdapterPlan& plan);
Json cmd_plan(const PlanRequest& request, std::uint64_t seed);

inline constexpr double kReferenceKronAAccuracy = 54.74;
inline constexpr double kReferenceLoRA8Accuracy = 74.39;

// ---- bench ----------------------------------------------------------------

struct BenchRequest {
    std::vector<AdapterKind> kinds{AdapterKind::LoRA, AdapterKind::KronLoRA};
    std::size_t d_in = 4096;
    std::size_t d_out = 4096;
    std::size_t r = 8;
    std::size_t batch = 8;
    std::size_t repeats = 5;
    std::size_t warmup = 1;
    std::size_t target_slice = kDefaultTargetSlice;
    std::optional<std::size_t> fixed_a2;
    // Checkpoint timing writes here; a temporary directory otherwise.
    std::optional<std::filesystem::path> scratch_dir;
};

/// Transient doubles per example held by the factored chain:
/// LoRA r; KronA b2*a1 + b2*a2; Kron-LoRA r*a1 + r*a2 + b2*a2.
std::size_t workspace_floats_per_example(const AdapterPlan& plan);

inline constexpr double kReferenceGpuThroughputLoRA = 29.28;
inline constexpr double kReferenceGpuThroughputKronLoRA = 27.04;

Json cmd_bench(const BenchRequest& request, std::uint64_t seed);

// ---- train / sequential ---------------------------------------------------

/// Both commands write <report>.json and per-arm checkpoints under out_dir
/// when it is set. Config errors carry the offending key.
Json cmd_train(const KeyValueConfig& config, std::uint64_t seed,
               const std::optional<std::filesystem::path>& out_dir = std::nullopt);
Json cmd_sequential(const KeyValueConfig& config, std::uint64_t seed,
                    const std::optional<std::filesystem::path>& out_dir = std::nullopt);

void write_json_file(const Json& report, const std::filesystem::path& path);

} // namespace kronlora
