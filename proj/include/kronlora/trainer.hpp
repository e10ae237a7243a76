// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kronlora/adapters.hpp"
#include "kronlora/optimizer.hpp"
#include "kronlora/toy_tasks.hpp"

namespace kronlora {

/// Fully-trained classifier on top of the adapted layer: logits = W h + b.
struct LinearHead {
    DenseMatrix weight; // n_classes x d_out
    DenseMatrix bias;   // n_classes x 1
};

LinearHead init_head(std::size_t n_classes, std::size_t d_out, Rng& rng);

/// Adapter plus, for classification tasks, its head.
struct AdaptedModel {
    Adapter adapter;
    std::optional<LinearHead> head;
};

struct TrainConfig {
    double lr = 3e-4;
    double weight_decay = 0.01;
    std::size_t batch_size = 8;
    std::size_t epochs = 1;
    std::uint64_t seed = 0;
    bool dropout_active = true;
    // Reload the best-validation checkpoint once training ends.
    bool restore_best = true;
    // When set, every new best epoch is also written here as <checkpoint_prefix>-epoch<N>.klora.
    std::optional<std::filesystem::path> checkpoint_dir;
    std::string checkpoint_prefix = "adapter";
};

void validate_train_config(const TrainConfig& cfg);

struct TrainReport {
    std::vector<double> epoch_loss;  // mean minibatch loss per epoch
    std::vector<double> val_metric;  // accuracy (classification) or MSE (regression)
    std::string metric_name;
    std::size_t best_epoch = 0;      // 1-based
    std::string best_checkpoint;     // id or file path of the best epoch's checkpoint
    std::uint64_t steps = 0;
    double initial_test_metric = 0.0;
    double final_test_metric = 0.0;
};

double evaluate_mse(const AdaptedModel& model, const FrozenLinear& layer, const DataSplit& split);
double evaluate_accuracy(const AdaptedModel& model, const FrozenLinear& layer, const DataSplit& split);

/// Minibatch AdamW with a linear decay over epochs * ceil(n_train / batch) steps.
/// Throws DivergenceError on a non-finite loss.
TrainReport train(AdaptedModel& model, const FrozenLinear& layer, const ToyTask& task, const TrainConfig& cfg);

struct SequentialRunReport {
    double acc_t1_after_t1 = 0.0;
    double acc_t2_after_t2 = 0.0;
    double acc_t1_after_t2 = 0.0;
    double delta_t1 = 0.0;
    TrainReport phase1;
    TrainReport phase2;
};

enum class SequentialMode {
    Continue,     // keep training the task-1 model on task 2
    FreshPerTask, // control: task 2 gets its own model, task 1's model is untouched
};

/// delta T1 = (task-1 accuracy after task 2) - (task-1 accuracy after task 1).
double forgetting_delta(double acc_t1_after_t1, double acc_t1_after_t2) noexcept;

using ModelFactory = std::function<AdaptedModel()>;

SequentialRunReport run_sequential(const ModelFactory& factory, const FrozenLinear& layer, const ToyTask& task1,
                                   const ToyTask& task2, const TrainConfig& cfg1, const TrainConfig& cfg2,
                                   SequentialMode mode = SequentialMode::Continue);

} // namespace kronlora
