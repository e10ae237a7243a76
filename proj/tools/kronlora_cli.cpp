// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "kronlora/commands.hpp"
#include "kronlora/errors.hpp"

namespace {

using kronlora::Json;

std::vector<kronlora::AdapterKind> parse_kinds(const std::vector<std::string>& names) {
    std::vector<kronlora::AdapterKind> kinds;
    for (const auto& n : names) {
        kinds.push_back(kronlora::parse_adapter_kind(n));
    }
    return kinds;
}

void print_summary(const Json& report) {
    const std::string type = report.at("report_type");
    if (type == "verify") {
        for (const auto& s : report.at("suites")) {
            std::printf("%-20s cases=%-5zu max_error=%-12s threshold=%-8g %s\n",
                        s.at("name").get<std::string>().c_str(), s.at("cases").get<std::size_t>(),
                        s.at("max_error").dump().c_str(), s.at("threshold").get<double>(),
                        s.at("passed").get<bool>() ? "PASS" : "FAIL");
        }
    } else if (type == "plan") {
        for (const auto& p : report.at("plans")) {
            const auto& plan = p.at("plan");
            std::printf("%-9s a=(%zu,%zu) b=(%zu,%zu) r=%zu params=%zu bytes=%zu ratio_vs_lora=%.2f\n",
                        p.at("kind").get<std::string>().c_str(), plan.at("a1").get<std::size_t>(),
                        plan.at("a2").get<std::size_t>(), plan.at("b1").get<std::size_t>(),
                        plan.at("b2").get<std::size_t>(), plan.at("r").get<std::size_t>(),
                        p.at("param_count").get<std::size_t>(), p.at("checkpoint_bytes").get<std::size_t>(),
                        p.at("param_ratio_vs_lora").get<double>());
            for (const auto& f : p.at("flags")) {
                std::printf("          flag: %s\n", f.get<std::string>().c_str());
            }
        }
    } else if (type == "bench") {
        for (const auto& r : report.at("results")) {
            const auto& t = r.at("timing");
            std::printf("%-9s fwd %.2f ex/s  fwd+bwd %.2f ex/s  adapter %zu B  workspace %zu B\n",
                        r.at("kind").get<std::string>().c_str(), t.at("forward_throughput").get<double>(),
                        t.at("forward_backward_throughput").get<double>(), r.at("adapter_bytes").get<std::size_t>(),
                        r.at("workspace_bytes").get<std::size_t>());
        }
        if (report.contains("timing")) {
            std::printf("kronlora/lora forward throughput: %.3f (reference GPU: %.3f)\n",
                        report.at("timing").at("kronlora_over_lora_forward_throughput").get<double>(),
                        report.at("reference_gpu_throughput").at("kronlora_over_lora").get<double>());
        }
    } else if (type == "train") {
        for (const auto& a : report.at("arms")) {
            const auto& r = a.at("report");
            std::printf("%-9s %s: initial %.6g -> final %.6g (best epoch %zu, %zu steps)\n",
                        a.at("kind").get<std::string>().c_str(), r.at("metric_name").get<std::string>().c_str(),
                        r.at("initial_test_metric").get<double>(), r.at("final_test_metric").get<double>(),
                        r.at("best_epoch").get<std::size_t>(), r.at("steps").get<std::size_t>());
        }
    } else if (type == "sequential") {
        for (const auto& a : report.at("arms")) {
            std::printf("%-9s T1->T1 %.4f  T2->T2 %.4f  T2->T1 %.4f  delta_T1 %+.4f\n",
                        a.at("kind").get<std::string>().c_str(), a.at("acc_t1_after_t1").get<double>(),
                        a.at("acc_t2_after_t2").get<double>(), a.at("acc_t1_after_t2").get<double>(),
                        a.at("delta_t1").get<double>());
        }
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"kronlora: Kronecker-factored low-rank adapters on frozen linear layers"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may follow the subcommand

    std::uint64_t seed = 0;
    std::optional<std::string> out;
    bool json = false;
    app.add_option("--seed", seed, "Root seed for every random stream")->capture_default_str();
    app.add_option("--out", out, "Directory for reports and checkpoints");
    app.add_flag("--json", json, "Print the JSON report to stdout");

    kronlora::VerifyRequest verify;
    std::optional<std::string> suite;
    auto* verify_cmd = app.add_subcommand("verify", "Oracle-equivalence, rank-identity and gradient-check suites");
    verify_cmd->add_option("--trials", verify.trials, "Cases per suite")->capture_default_str()->check(CLI::PositiveNumber);
    verify_cmd->add_flag("--sabotage", verify.sabotage, "Use row-major vec order (negative control)");
    verify_cmd->add_option("--suite", suite, "Run one suite: oracle_equivalence | rank_identity | gradient_check");
    verify_cmd->add_option("--first-case", verify.first_case, "Index of the first case (replay)");

    kronlora::PlanRequest plan;
    std::vector<std::string> plan_kinds{"lora", "krona", "kronlora"};
    std::optional<std::size_t> plan_a2;
    auto* plan_cmd = app.add_subcommand("plan", "Adapter shapes, parameter counts and checkpoint sizes");
    plan_cmd->add_option("--d-in", plan.layer.d_in, "Layer input width")->required();
    plan_cmd->add_option("--d-out", plan.layer.d_out, "Layer output width")->required();
    plan_cmd->add_option("--rank,-r", plan.r, "Adapter rank")->capture_default_str();
    plan_cmd->add_option("--kinds", plan_kinds, "Adapter kinds")->delimiter(',')->capture_default_str();
    plan_cmd->add_option("--target-slice", plan.target_slice, "Preferred d_out / a2 for Kron-LoRA")
        ->capture_default_str();
    plan_cmd->add_option("--a2", plan_a2, "Fix Kron-LoRA's a2 instead of searching");
    plan_cmd->add_flag("--vocab", plan.layer.is_vocab_projection, "Layer is a vocabulary projection");
    plan_cmd->add_option("--alpha", plan.alpha, "Scaling numerator")->capture_default_str();
    plan_cmd->add_option("--dropout", plan.dropout_p, "Adapter-input dropout")->capture_default_str();

    kronlora::BenchRequest bench;
    std::vector<std::string> bench_kinds{"lora", "kronlora"};
    std::optional<std::size_t> bench_a2;
    auto* bench_cmd = app.add_subcommand("bench", "Forward / backward throughput and memory proxies");
    bench_cmd->add_option("--kinds", bench_kinds, "Adapter kinds")->delimiter(',')->capture_default_str();
    bench_cmd->add_option("--d-in", bench.d_in)->capture_default_str();
    bench_cmd->add_option("--d-out", bench.d_out)->capture_default_str();
    bench_cmd->add_option("--rank,-r", bench.r)->capture_default_str();
    bench_cmd->add_option("--batch", bench.batch)->capture_default_str();
    bench_cmd->add_option("--repeats", bench.repeats, "Timed repeats (>= 3)")->capture_default_str();
    bench_cmd->add_option("--warmup", bench.warmup, "Untimed warmup runs")->capture_default_str();
    bench_cmd->add_option("--target-slice", bench.target_slice)->capture_default_str();
    bench_cmd->add_option("--a2", bench_a2, "Fix Kron-LoRA's a2");

    std::string train_config;
    auto* train_cmd = app.add_subcommand("train", "Train one or more adapter arms on a toy task");
    train_cmd->add_option("config", train_config, "key = value config file")->required()->check(CLI::ExistingFile);

    std::string seq_config;
    auto* seq_cmd = app.add_subcommand("sequential", "Two-task forgetting protocol");
    seq_cmd->add_option("config", seq_config, "key = value config file")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    const std::optional<std::filesystem::path> out_dir =
        out ? std::optional<std::filesystem::path>(*out) : std::nullopt;
    try {
        Json report;
        int exit_code = 0;
        std::string report_name;
        if (*verify_cmd) {
            verify.only_suite = suite;
            auto result = kronlora::cmd_verify(verify, seed);
            report = std::move(result.report);
            exit_code = result.exit_code;
            report_name = "verify_report.json";
        } else if (*plan_cmd) {
            plan.kinds = parse_kinds(plan_kinds);
            plan.fixed_a2 = plan_a2;
            report = kronlora::cmd_plan(plan, seed);
            report_name = "plan_report.json";
        } else if (*bench_cmd) {
            bench.kinds = parse_kinds(bench_kinds);
            bench.fixed_a2 = bench_a2;
            bench.scratch_dir = out_dir;
            report = kronlora::cmd_bench(bench, seed);
            report_name = "bench_report.json";
        } else if (*train_cmd) {
            report = kronlora::cmd_train(kronlora::KeyValueConfig::parse_file(train_config), seed, out_dir);
        } else if (*seq_cmd) {
            report = kronlora::cmd_sequential(kronlora::KeyValueConfig::parse_file(seq_config), seed, out_dir);
        }
        if (out_dir && !report_name.empty()) {
            kronlora::write_json_file(report, *out_dir / report_name);
        }
        if (json) {
            std::cout << report.dump(2) << '\n';
        } else {
            print_summary(report);
        }
        return exit_code;
    } catch (const kronlora::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const kronlora::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << '\n';
        return 4;
    }
}
