// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "kronlora/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <limits>
#include <utility>

#include "kronlora/adapters.hpp"
#include "kronlora/autograd.hpp"
#include "kronlora/checkpoint.hpp"
#include "kronlora/errors.hpp"
#include "kronlora/rng.hpp"
#include "kronlora/toy_tasks.hpp"
#include "kronlora/trainer.hpp"

#ifndef KRONLORA_VERSION
#define KRONLORA_VERSION "0.0.0"
#endif

namespace kronlora {

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::size_t kMaxReportedFailures = 5;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::size_t uniform_in(Rng& rng, std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng.uniform_index(hi - lo + 1));
}

std::size_t random_divisor(Rng& rng, std::size_t n) {
    const auto ds = divisors(n);
    return ds[rng.uniform_index(ds.size())];
}

FrozenLinear random_layer(std::size_t d_in, std::size_t d_out, Rng& rng) {
    DenseMatrix w = rng.normal_matrix(d_out, d_in, 1.0 / std::sqrt(static_cast<double>(d_in)));
    DenseMatrix b = rng.normal_matrix(d_out, 1, 0.1);
    return FrozenLinear(std::move(w), std::move(b));
}

Adapter random_adapter(const AdapterPlan& plan, Rng& rng, double stddev) {
    std::vector<DenseMatrix> tensors;
    for (const auto& [rows, cols] : parameter_shapes(plan)) {
        tensors.push_back(rng.normal_matrix(rows, cols, stddev));
    }
    return make_adapter(plan, std::move(tensors));
}

constexpr AdapterKind kAllKinds[] = {AdapterKind::LoRA, AdapterKind::KronA, AdapterKind::KronLoRA};

AdapterPlan random_plan(AdapterKind kind, Rng& rng, std::size_t dim_lo, std::size_t dim_hi, std::size_t r_hi,
                        double alpha) {
    const std::size_t d_in = uniform_in(rng, dim_lo, dim_hi);
    const std::size_t d_out = uniform_in(rng, dim_lo, dim_hi);
    const std::size_t r = uniform_in(rng, 1, r_hi);
    if (kind == AdapterKind::LoRA) {
        return plan_lora({d_in, d_out, false}, r, alpha);
    }
    const std::size_t a1 = random_divisor(rng, d_in);
    const std::size_t a2 = random_divisor(rng, d_out);
    return make_kron_plan(kind, a1, a2, d_in / a1, d_out / a2, kind == AdapterKind::KronA ? 1 : r, alpha);
}

Json plan_brief(const AdapterPlan& plan) {
    return {{"kind", to_string(plan.kind)}, {"d_in", plan.d_in}, {"d_out", plan.d_out}, {"a1", plan.a1},
            {"a2", plan.a2},                {"b1", plan.b1},     {"b2", plan.b2},       {"r", plan.r},
            {"alpha", plan.alpha}};
}

void record_case(SuiteResult& suite, double error, Json detail) {
    suite.cases += 1;
    if (!(error <= suite.threshold)) {
        suite.passed = false;
        if (suite.failing_cases.size() < kMaxReportedFailures) {
            detail["error"] = std::isfinite(error) ? Json(error) : Json(std::to_string(error));
            suite.failing_cases.push_back(std::move(detail));
        }
    }
    if (std::isnan(error) || error > suite.max_error) {
        suite.max_error = error;
    }
}

Json timing_stats(std::vector<double> samples) {
    std::sort(samples.begin(), samples.end());
    const std::size_t n = samples.size();
    const double median = n % 2 == 1 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
    return {{"median_s", median}, {"min_s", samples.front()}, {"max_s", samples.back()}, {"repeats", n}};
}

template <typename Fn>
std::vector<double> time_repeats(std::size_t warmup, std::size_t repeats, Fn&& fn) {
    for (std::size_t i = 0; i < warmup; ++i) {
        fn();
    }
    std::vector<double> samples;
    samples.reserve(repeats);
    for (std::size_t i = 0; i < repeats; ++i) {
        const auto start = Clock::now();
        fn();
        samples.push_back(seconds_since(start));
    }
    return samples;
}

} // namespace

std::string_view library_version() noexcept {
    return KRONLORA_VERSION;
}

RunManifest make_manifest(std::string command, std::uint64_t seed, Json config) {
    return {std::move(command), seed, std::move(config), std::string(library_version()), utc_timestamp()};
}

Json to_json(const RunManifest& m) {
    return {{"tool", "kronlora"},  {"command", m.command}, {"seed", m.seed},
            {"config", m.config},   {"version", m.version}, {"timestamp", m.timestamp}};
}

Json strip_volatile(Json report) {
    if (report.is_object()) {
        report.erase("timing");
        if (auto it = report.find("manifest"); it != report.end() && it->is_object()) {
            it->erase("timestamp");
        }
        for (auto& [key, value] : report.items()) {
            value = strip_volatile(std::move(value));
        }
    } else if (report.is_array()) {
        for (auto& value : report) {
            value = strip_volatile(std::move(value));
        }
    }
    return report;
}

void write_json_file(const Json& report, const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write report '" + path.string() + "'");
    }
    out << report.dump(2) << '\n';
    if (!out) {
        throw IoError("short write on report '" + path.string() + "'");
    }
}

// ---- verify ---------------------------------------------------------------

Json to_json(const SuiteResult& s) {
    return {{"name", s.name},
            {"cases", s.cases},
            {"max_error", std::isfinite(s.max_error) ? Json(s.max_error) : Json(std::to_string(s.max_error))},
            {"threshold", s.threshold},
            {"passed", s.passed},
            {"failing_cases", s.failing_cases},
            {"timing", {{"seconds", s.seconds}}}};
}

SuiteResult run_oracle_suite(std::uint64_t seed, std::size_t trials, std::size_t first_case, VecOrder order) {
    const auto start = Clock::now();
    SuiteResult suite{"oracle_equivalence"};
    suite.threshold = kOracleThreshold;
    const Rng root(seed);
    for (std::size_t i = first_case; i < first_case + trials; ++i) {
        Rng rng = root.split(i);
        const AdapterKind kind = kAllKinds[i % 3];
        const AdapterPlan plan = random_plan(kind, rng, 4, 256, 8, 1.0 + 63.0 * rng.uniform());
        const Adapter adapter = random_adapter(plan, rng, 1.0 / std::sqrt(static_cast<double>(plan.d_in)));
        const FrozenLinear layer = random_layer(plan.d_in, plan.d_out, rng);
        const DenseMatrix x = rng.normal_matrix(plan.d_in, uniform_in(rng, 1, 4));

        const DenseMatrix lhs = subtract(forward_inference(adapter, layer, x, {order, nullptr}), layer.apply(x));
        const DenseMatrix rhs = matmul(expand_delta(adapter), x);
        const double error = max_abs_diff(lhs, rhs) / std::max(max_abs(rhs), std::numeric_limits<double>::min());
        Json detail = plan_brief(plan);
        detail["case_index"] = i;
        detail["batch"] = x.cols();
        record_case(suite, error, std::move(detail));
    }
    suite.seconds = seconds_since(start);
    return suite;
}

namespace {

// Random p x q matrix of a known rank (0 included), or a dense Gaussian one.
std::pair<DenseMatrix, std::size_t> random_ranked(Rng& rng) {
    const std::size_t p = uniform_in(rng, 1, 8);
    const std::size_t q = uniform_in(rng, 1, 8);
    const std::size_t full = std::min(p, q);
    switch (rng.uniform_index(8)) {
    case 0:
        return {DenseMatrix(p, q), 0};
    case 1:
    case 2:
    case 3: {
        const std::size_t k = uniform_in(rng, 1, full);
        return {matmul(rng.normal_matrix(p, k), rng.normal_matrix(k, q)), k};
    }
    default:
        return {rng.normal_matrix(p, q), full};
    }
}

} // namespace

SuiteResult run_rank_suite(std::uint64_t seed, std::size_t trials, std::size_t first_case) {
    const auto start = Clock::now();
    SuiteResult suite{"rank_identity"};
    suite.threshold = kRankThreshold;
    const Rng root(seed);
    for (std::size_t i = first_case; i < first_case + trials; ++i) {
        Rng rng = root.split(i);
        const auto [a, built_a] = random_ranked(rng);
        const auto [b, built_b] = random_ranked(rng);
        const std::size_t ra = numerical_rank(a);
        const std::size_t rb = numerical_rank(b);
        const std::size_t rk = numerical_rank(kron(a, b));
        // Count of violated equalities: the identity itself, plus agreement with the construction.
        const double error = (rk != ra * rb ? 1.0 : 0.0) + (ra != built_a ? 1.0 : 0.0) + (rb != built_b ? 1.0 : 0.0);
        record_case(suite, error,
                    {{"case_index", i},
                     {"a_shape", a.shape_string()},
                     {"b_shape", b.shape_string()},
                     {"rank_a", ra},
                     {"rank_b", rb},
                     {"rank_kron", rk},
                     {"constructed_ranks", {built_a, built_b}}});
    }
    suite.seconds = seconds_since(start);
    return suite;
}

SuiteResult run_gradient_suite(std::uint64_t seed, std::size_t trials, std::size_t first_case) {
    const auto start = Clock::now();
    SuiteResult suite{"gradient_check"};
    suite.threshold = kGradientThreshold;
    const Rng root(seed);
    for (std::size_t i = first_case; i < first_case + trials; ++i) {
        Rng rng = root.split(i);
        const AdapterKind kind = kAllKinds[i % 3];
        const LossKind loss_kind = (i / 3) % 2 == 0 ? LossKind::MSE : LossKind::SoftmaxCE;
        const double alpha = 1.0 + 7.0 * rng.uniform();
        AdapterPlan plan;
        if (kind == AdapterKind::LoRA) {
            plan = plan_lora({uniform_in(rng, 2, 8), uniform_in(rng, 2, 8), false}, uniform_in(rng, 1, 4), alpha);
        } else {
            const std::size_t a1 = uniform_in(rng, 1, 3);
            const std::size_t b1 = uniform_in(rng, 1, 4);
            const std::size_t a2 = uniform_in(rng, 1, 3);
            const std::size_t b2 = uniform_in(rng, 1, 4);
            plan = make_kron_plan(kind, a1, a2, b1, b2, kind == AdapterKind::KronA ? 1 : uniform_in(rng, 1, 3), alpha);
        }
        Adapter adapter = random_adapter(plan, rng, 0.5);
        const FrozenLinear layer = random_layer(plan.d_in, plan.d_out, rng);
        const std::size_t batch = uniform_in(rng, 1, 3);
        const DenseMatrix x = rng.normal_matrix(plan.d_in, batch);
        DenseMatrix targets(plan.d_out, batch);
        if (loss_kind == LossKind::MSE) {
            targets = rng.normal_matrix(plan.d_out, batch);
        } else {
            for (std::size_t b = 0; b < batch; ++b) {
                targets(rng.uniform_index(plan.d_out), b) = 1.0;
            }
        }
        const LossSpec loss{loss_kind, targets};

        Rng unused(0);
        const GradientSet grads = loss_and_grad(adapter, layer, x, loss, unused);
        double error = 0.0;
        std::string worst;
        for (const auto& [name, analytic] : grads.entries) {
            const DenseMatrix numeric = finite_difference_grad(adapter, layer, x, loss, name, 1e-5);
            for (std::size_t k = 0; k < analytic.size(); ++k) {
                const double g = analytic.data()[k];
                const double rel = std::abs(g - numeric.data()[k]) / std::max(std::abs(g), 1e-8);
                if (!(rel <= error)) {
                    error = rel;
                    worst = name;
                }
            }
        }
        Json detail = plan_brief(plan);
        detail["case_index"] = i;
        detail["loss"] = loss_kind == LossKind::MSE ? "mse" : "softmax_ce";
        detail["batch"] = batch;
        detail["worst_tensor"] = worst;
        record_case(suite, error, std::move(detail));
    }
    suite.seconds = seconds_since(start);
    return suite;
}

CommandResult cmd_verify(const VerifyRequest& request, std::uint64_t seed) {
    if (request.trials == 0) {
        throw ConfigError("verify needs trials >= 1");
    }
    const auto want = [&](std::string_view name) { return !request.only_suite || *request.only_suite == name; };
    if (request.only_suite && !want("oracle_equivalence") && !want("rank_identity") && !want("gradient_check")) {
        throw ConfigError("unknown suite '" + *request.only_suite +
                          "' (expected oracle_equivalence, rank_identity or gradient_check)");
    }
    const VecOrder order = request.sabotage ? VecOrder::RowMajor : VecOrder::ColumnMajor;
    std::vector<SuiteResult> suites;
    if (want("oracle_equivalence")) {
        suites.push_back(run_oracle_suite(seed, request.trials, request.first_case, order));
    }
    if (want("rank_identity")) {
        suites.push_back(run_rank_suite(seed, request.trials, request.first_case));
    }
    if (want("gradient_check")) {
        suites.push_back(run_gradient_suite(seed, request.trials, request.first_case));
    }

    Json config = {{"trials", request.trials}, {"sabotage", request.sabotage}, {"first_case", request.first_case}};
    if (request.only_suite) {
        config["suite"] = *request.only_suite;
    }
    Json report = {{"report_type", "verify"}, {"manifest", to_json(make_manifest("verify", seed, config))}};
    bool passed = true;
    report["suites"] = Json::array();
    for (const SuiteResult& s : suites) {
        passed = passed && s.passed;
        report["suites"].push_back(to_json(s));
    }
    report["passed"] = passed;
    return {passed ? 0 : 1, std::move(report)};
}

// ---- plan -----------------------------------------------------------------

AdapterPlan plan_for(AdapterKind kind, const PlanRequest& request) {
    switch (kind) {
    case AdapterKind::LoRA:
        return plan_lora(request.layer, request.r, request.alpha, request.dropout_p);
    case AdapterKind::KronA:
        return plan_krona(request.layer, request.alpha, request.dropout_p);
    case AdapterKind::KronLoRA:
        return plan_kron_lora(request.layer, request.r,
                              {request.target_slice, request.fixed_a2, request.alpha, request.dropout_p});
    }
    throw PlanningError("unknown adapter kind");
}

Json to_json(const AdapterPlan& plan) {
    Json j = plan_brief(plan);
    j["dropout_p"] = plan.dropout_p;
    j["scale"] = plan.scale();
    j["degenerate_factorization"] = plan.degenerate_factorization;
    return j;
}

Json cmd_plan(const PlanRequest& request, std::uint64_t seed) {
    if (request.kinds.empty()) {
        throw ConfigError("plan needs at least one adapter kind");
    }
    const AdapterPlan lora = plan_lora(request.layer, request.r, request.alpha, request.dropout_p);
    const std::size_t lora_params = param_count(lora);
    const std::size_t lora_bytes = checkpoint_size(lora);

    Json config = {{"d_in", request.layer.d_in},
                   {"d_out", request.layer.d_out},
                   {"r", request.r},
                   {"vocab", request.layer.is_vocab_projection},
                   {"target_slice", request.target_slice},
                   {"alpha", request.alpha},
                   {"dropout_p", request.dropout_p}};
    if (request.fixed_a2) {
        config["a2"] = *request.fixed_a2;
    }
    Json kinds = Json::array();
    for (AdapterKind k : request.kinds) {
        kinds.push_back(to_string(k));
    }
    config["kinds"] = kinds;

    Json rows = Json::array();
    for (AdapterKind kind : request.kinds) {
        const AdapterPlan plan = plan_for(kind, request);
        const std::size_t params = param_count(plan);
        const std::size_t bytes = checkpoint_size(plan);
        Json row = {{"kind", to_string(kind)},
                    {"plan", to_json(plan)},
                    {"param_count", params},
                    {"checkpoint_bytes", bytes},
                    {"param_ratio_vs_lora", static_cast<double>(lora_params) / static_cast<double>(params)},
                    {"checkpoint_ratio_vs_lora", static_cast<double>(lora_bytes) / static_cast<double>(bytes)},
                    {"flags", Json::array()}};
        if (kind == AdapterKind::KronA) {
            row["flags"].push_back("accuracy-risk: pure Kronecker");
            row["reference_accuracy"] = {{"krona", kReferenceKronAAccuracy}, {"lora_r8", kReferenceLoRA8Accuracy}};
        }
        if (plan.degenerate_factorization) {
            row["flags"].push_back("degenerate factorization (a factor of size 1)");
        }
        rows.push_back(std::move(row));
    }
    return {{"report_type", "plan"},
            {"manifest", to_json(make_manifest("plan", seed, config))},
            {"lora_reference", {{"r", request.r}, {"param_count", lora_params}, {"checkpoint_bytes", lora_bytes}}},
            {"plans", rows}};
}

// ---- bench ----------------------------------------------------------------

std::size_t workspace_floats_per_example(const AdapterPlan& plan) {
    switch (plan.kind) {
    case AdapterKind::LoRA:
        return plan.r;
    case AdapterKind::KronA:
        return plan.b2 * plan.a1 + plan.b2 * plan.a2;
    case AdapterKind::KronLoRA:
        return plan.r * plan.a1 + plan.r * plan.a2 + plan.b2 * plan.a2;
    }
    return 0;
}

Json cmd_bench(const BenchRequest& request, std::uint64_t seed) {
    if (request.repeats < 3) {
        throw ConfigError("bench needs repeats >= 3, got " + std::to_string(request.repeats));
    }
    if (request.batch == 0 || request.kinds.empty()) {
        throw ConfigError("bench needs batch >= 1 and at least one adapter kind");
    }
    PlanRequest planning;
    planning.layer = {request.d_in, request.d_out, false};
    planning.r = request.r;
    planning.target_slice = request.target_slice;
    planning.fixed_a2 = request.fixed_a2;

    Rng root(seed);
    Rng layer_rng = root.split(0);
    const FrozenLinear layer = random_layer(request.d_in, request.d_out, layer_rng);
    Rng data_rng = root.split(1);
    const DenseMatrix x = data_rng.normal_matrix(request.d_in, request.batch);
    const DenseMatrix upstream = data_rng.normal_matrix(request.d_out, request.batch, 1.0 / request.batch);

    const std::filesystem::path scratch =
        request.scratch_dir.value_or(std::filesystem::temp_directory_path() / "kronlora-bench");
    std::filesystem::create_directories(scratch);

    Json config = {{"d_in", request.d_in},       {"d_out", request.d_out},   {"r", request.r},
                   {"batch", request.batch},     {"repeats", request.repeats}, {"warmup", request.warmup},
                   {"target_slice", request.target_slice}};
    if (request.fixed_a2) {
        config["a2"] = *request.fixed_a2;
    }
    Json results = Json::array();
    std::optional<double> lora_fwd;
    std::optional<double> kron_lora_fwd;
    for (AdapterKind kind : request.kinds) {
        const AdapterPlan plan = plan_for(kind, planning);
        Rng adapter_rng = root.split(2 + static_cast<std::uint64_t>(kind));
        // Dense random factors so no multiply short-circuits on zeros.
        Adapter adapter = random_adapter(plan, adapter_rng, 0.02);
        Rng dropout_rng = root.split(16 + static_cast<std::uint64_t>(kind));

        const auto fwd = time_repeats(request.warmup, request.repeats,
                                      [&] { (void)forward_inference(adapter, layer, x); });
        set_training_mode(adapter, true);
        const auto fwd_bwd = time_repeats(request.warmup, request.repeats, [&] {
            (void)forward(adapter, layer, x, dropout_rng);
            (void)backward(adapter, layer, x, upstream);
        });
        set_training_mode(adapter, false);
        const auto path = scratch / ("bench-" + std::string(to_string(kind)) + ".klora");
        std::size_t written = 0;
        const auto save = time_repeats(0, request.repeats, [&] { written = save_checkpoint(adapter, path); });
        std::filesystem::remove(path);

        Json fwd_stats = timing_stats(fwd);
        Json fb_stats = timing_stats(fwd_bwd);
        const double fwd_tp = static_cast<double>(request.batch) / fwd_stats["median_s"].get<double>();
        const double fb_tp = static_cast<double>(request.batch) / fb_stats["median_s"].get<double>();
        if (kind == AdapterKind::LoRA) {
            lora_fwd = fwd_tp;
        } else if (kind == AdapterKind::KronLoRA) {
            kron_lora_fwd = fwd_tp;
        }
        const std::size_t ws_floats = workspace_floats_per_example(plan);
        results.push_back({{"kind", to_string(kind)},
                           {"plan", to_json(plan)},
                           {"d_in", request.d_in},
                           {"d_out", request.d_out},
                           {"batch", request.batch},
                           {"param_count", param_count(plan)},
                           {"adapter_bytes", param_count(plan) * sizeof(double)},
                           {"checkpoint_bytes", written},
                           {"workspace_floats_per_example", ws_floats},
                           {"workspace_bytes", ws_floats * request.batch * sizeof(double)},
                           {"workspace_note", "analytic proxy: transient doubles of the factored chain x batch x 8"},
                           {"timing",
                            {{"forward", fwd_stats},
                             {"forward_backward", fb_stats},
                             {"checkpoint_save", timing_stats(save)},
                             {"forward_throughput", fwd_tp},
                             {"forward_backward_throughput", fb_tp}}}});
    }
    Json report = {{"report_type", "bench"},
                   {"manifest", to_json(make_manifest("bench", seed, config))},
                   {"results", results},
                   {"reference_gpu_throughput",
                    {{"lora", kReferenceGpuThroughputLoRA},
                     {"kronlora", kReferenceGpuThroughputKronLoRA},
                     {"kronlora_over_lora", kReferenceGpuThroughputKronLoRA / kReferenceGpuThroughputLoRA}}}};
    if (lora_fwd && kron_lora_fwd) {
        report["timing"] = {{"kronlora_over_lora_forward_throughput", *kron_lora_fwd / *lora_fwd}};
    }
    return report;
}

// ---- train / sequential ---------------------------------------------------

namespace {

struct ModelSettings {
    PlanRequest planning;
    std::vector<AdapterKind> arms;
};

ModelSettings read_model_settings(const KeyValueConfig& cfg) {
    ModelSettings s;
    s.planning.layer.d_in = cfg.get_uint("d_in");
    s.planning.layer.d_out = cfg.get_uint("d_out");
    s.planning.layer.is_vocab_projection = cfg.get_bool("vocab", false);
    s.planning.r = cfg.get_uint("rank", 8);
    s.planning.alpha = cfg.get_double("alpha", kDefaultAlpha);
    s.planning.dropout_p = cfg.get_double("dropout", kDefaultDropout);
    s.planning.target_slice = cfg.get_uint("target_slice", kDefaultTargetSlice);
    if (cfg.has("a2")) {
        s.planning.fixed_a2 = cfg.get_uint("a2");
    }
    const std::string kind = cfg.get_string("kind", "kronlora");
    for (const std::string& arm : cfg.get_list("arms", {kind})) {
        try {
            s.arms.push_back(parse_adapter_kind(arm));
        } catch (const Error& e) {
            throw ConfigError("key 'arms': " + std::string(e.what()));
        }
    }
    return s;
}

TrainConfig read_train_config(const KeyValueConfig& cfg, std::string_view prefix, std::uint64_t seed) {
    const auto key = [&](std::string_view k) { return prefix.empty() ? std::string(k) : cfg.scoped_key(prefix, k); };
    TrainConfig t;
    t.lr = cfg.get_double(key("lr"), 3e-4);
    t.weight_decay = cfg.get_double(key("weight_decay"), 0.01);
    t.batch_size = cfg.get_uint(key("batch_size"), 8);
    t.epochs = cfg.get_uint(key("epochs"), 1);
    t.dropout_active = cfg.get_bool(key("dropout_active"), true);
    t.restore_best = cfg.get_bool(key("restore_best"), true);
    t.seed = seed;
    try {
        validate_train_config(t);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(prefix.empty() ? "" : std::string(prefix) + ": ") + e.what());
    }
    return t;
}

SplitSizes read_sizes(const KeyValueConfig& cfg, std::string_view prefix) {
    const auto key = [&](std::string_view k) { return prefix.empty() ? std::string(k) : cfg.scoped_key(prefix, k); };
    return {cfg.get_uint(key("n_train"), 400), cfg.get_uint(key("n_val"), 100), cfg.get_uint(key("n_test"), 200)};
}

Json config_echo(const KeyValueConfig& cfg) {
    Json j = Json::object();
    for (const auto& [k, v] : cfg.values()) {
        j[k] = v;
    }
    return j;
}

Json to_json(const TrainReport& r) {
    Json j = {{"metric_name", r.metric_name},
              {"epoch_loss", r.epoch_loss},
              {"val_metric", r.val_metric},
              {"best_epoch", r.best_epoch},
              {"best_checkpoint", r.best_checkpoint},
              {"steps", r.steps},
              {"initial_test_metric", r.initial_test_metric},
              {"final_test_metric", r.final_test_metric}};
    if (r.metric_name == "mse" && r.initial_test_metric > 0.0) {
        j["final_over_initial"] = r.final_test_metric / r.initial_test_metric;
    }
    return j;
}

// Seed streams shared by train and sequential so arms see identical data.
struct SeedPlan {
    explicit SeedPlan(std::uint64_t seed) : root(seed) {}
    Rng root;
    Rng layer() const { return root.split(1); }
    std::uint64_t init() const { return root.split(2).next_u64(); }
    Rng head() const { return root.split(3); }
    std::uint64_t train(std::uint64_t phase) const { return root.split(4 + phase).next_u64(); }
    std::uint64_t task(std::uint64_t index) const { return root.split(10 + index).next_u64(); }
};

std::optional<std::filesystem::path> arm_dir(const std::optional<std::filesystem::path>& out, AdapterKind kind) {
    if (!out) {
        return std::nullopt;
    }
    auto dir = *out / ("checkpoints-" + std::string(to_string(kind)));
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace

Json cmd_train(const KeyValueConfig& cfg, std::uint64_t seed, const std::optional<std::filesystem::path>& out_dir) {
    const SeedPlan seeds(seed);
    const ModelSettings model = read_model_settings(cfg);
    const ToyTaskKind task_kind = parse_toy_task_kind(cfg.get_string("task", "teacher_regression"));
    const SplitSizes sizes = read_sizes(cfg, "");
    const std::uint64_t task_seed = cfg.get_uint("task_seed", seeds.task(0));
    TrainConfig train_cfg = read_train_config(cfg, "", seeds.train(0));

    Rng layer_rng = seeds.layer();
    const FrozenLinear layer = random_layer(model.planning.layer.d_in, model.planning.layer.d_out, layer_rng);

    ToyTask task;
    std::size_t n_classes = 0;
    if (task_kind == ToyTaskKind::TeacherRegression) {
        const AdapterKind teacher_kind = parse_adapter_kind(cfg.get_string("teacher_kind", "kronlora"));
        const double perturbation = cfg.get_double("teacher_perturbation", 0.01);
        task = make_teacher_regression(layer, plan_for(teacher_kind, model.planning), seeds.init(), task_seed, sizes,
                                       perturbation);
    } else {
        n_classes = cfg.get_uint("n_classes", 4);
        task = make_cluster_classification(model.planning.layer.d_in, n_classes, task_seed, sizes,
                                           cfg.get_double("separation", 0.6));
    }
    cfg.reject_unknown_keys();

    Json arms = Json::array();
    for (AdapterKind kind : model.arms) {
        const AdapterPlan plan = plan_for(kind, model.planning);
        Rng init_rng(seeds.init());
        AdaptedModel m{init_adapter(plan, init_rng), std::nullopt};
        if (n_classes > 0) {
            Rng head_rng = seeds.head();
            m.head = init_head(n_classes, plan.d_out, head_rng);
        }
        TrainConfig arm_cfg = train_cfg;
        arm_cfg.checkpoint_dir = arm_dir(out_dir, kind);
        arm_cfg.checkpoint_prefix = std::string(to_string(kind));
        const TrainReport report = train(m, layer, task, arm_cfg);
        arms.push_back({{"kind", to_string(kind)},
                        {"plan", to_json(plan)},
                        {"param_count", param_count(plan)},
                        {"report", to_json(report)}});
    }
    Json out = {{"report_type", "train"},
                {"manifest", to_json(make_manifest("train", seed, config_echo(cfg)))},
                {"task", {{"kind", to_string(task_kind)}, {"seed", task_seed}, {"train", sizes.train},
                          {"val", sizes.val}, {"test", sizes.test}}},
                {"arms", arms}};
    if (out_dir) {
        write_json_file(out, *out_dir / "train_report.json");
    }
    return out;
}

Json cmd_sequential(const KeyValueConfig& cfg, std::uint64_t seed,
                    const std::optional<std::filesystem::path>& out_dir) {
    const SeedPlan seeds(seed);
    const ModelSettings model = read_model_settings(cfg);
    const std::string mode_text = cfg.get_string("mode", "continue");
    SequentialMode mode;
    if (mode_text == "continue") {
        mode = SequentialMode::Continue;
    } else if (mode_text == "fresh") {
        mode = SequentialMode::FreshPerTask;
    } else {
        throw ConfigError("key 'mode': expected 'continue' or 'fresh', got '" + mode_text + "'");
    }
    const std::size_t n_classes = cfg.get_uint("n_classes", 4);
    const bool identical = cfg.get_bool("identical_tasks", false);

    const auto make_task = [&](std::string_view prefix, std::uint64_t index) {
        const std::uint64_t task_seed = cfg.get_uint(cfg.scoped_key(prefix, "task_seed"), seeds.task(index));
        return make_cluster_classification(model.planning.layer.d_in, n_classes, task_seed,
                                           read_sizes(cfg, prefix),
                                           cfg.get_double(cfg.scoped_key(prefix, "separation"), 0.6));
    };
    const ToyTask task1 = make_task("task1", 0);
    const ToyTask task2 = identical ? task1 : make_task("task2", 1);
    const TrainConfig cfg1 = read_train_config(cfg, "phase1", seeds.train(0));
    const TrainConfig cfg2 = read_train_config(cfg, "phase2", seeds.train(1));
    cfg.reject_unknown_keys();

    Rng layer_rng = seeds.layer();
    const FrozenLinear layer = random_layer(model.planning.layer.d_in, model.planning.layer.d_out, layer_rng);

    Json arms = Json::array();
    for (AdapterKind kind : model.arms) {
        const AdapterPlan plan = plan_for(kind, model.planning);
        const ModelFactory factory = [&] {
            Rng init_rng(seeds.init());
            Rng head_rng = seeds.head();
            return AdaptedModel{init_adapter(plan, init_rng), init_head(n_classes, plan.d_out, head_rng)};
        };
        TrainConfig c1 = cfg1;
        TrainConfig c2 = cfg2;
        c1.checkpoint_dir = c2.checkpoint_dir = arm_dir(out_dir, kind);
        c1.checkpoint_prefix = std::string(to_string(kind)) + "-task1";
        c2.checkpoint_prefix = std::string(to_string(kind)) + "-task2";
        const SequentialRunReport r = run_sequential(factory, layer, task1, task2, c1, c2, mode);
        // Recomputed independently of the harness; must agree bit for bit.
        const double recomputed = r.acc_t1_after_t2 - r.acc_t1_after_t1;
        arms.push_back({{"kind", to_string(kind)},
                        {"plan", to_json(plan)},
                        {"param_count", param_count(plan)},
                        {"acc_t1_after_t1", r.acc_t1_after_t1},
                        {"acc_t2_after_t2", r.acc_t2_after_t2},
                        {"acc_t1_after_t2", r.acc_t1_after_t2},
                        {"delta_t1", r.delta_t1},
                        {"delta_t1_check", {{"recomputed", recomputed}, {"matches", recomputed == r.delta_t1}}},
                        {"phase1", to_json(r.phase1)},
                        {"phase2", to_json(r.phase2)}});
    }
    Json out = {{"report_type", "sequential"},
                {"manifest", to_json(make_manifest("sequential", seed, config_echo(cfg)))},
                {"mode", mode_text},
                {"tasks", {{"task1_seed", task1.seed}, {"task2_seed", task2.seed}, {"n_classes", n_classes},
                           {"identical", identical}}},
                {"arms", arms}};
    if (out_dir) {
        write_json_file(out, *out_dir / "sequential_report.json");
    }
    return out;
}

} // namespace kronlora
