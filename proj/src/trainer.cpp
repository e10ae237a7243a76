// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "kronlora/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <utility>

#include "kronlora/autograd.hpp"
#include "kronlora/checkpoint.hpp"
#include "kronlora/errors.hpp"

namespace kronlora {

namespace {

bool is_classification(const ToyTask& task) {
    return task.kind == ToyTaskKind::ClusterClassification;
}

void check_model_for_task(const AdaptedModel& model, const FrozenLinear& layer, const ToyTask& task) {
    const AdapterPlan& plan = plan_of(model.adapter);
    if (task.d_in != plan.d_in || layer.d_in() != plan.d_in || layer.d_out() != plan.d_out) {
        throw ShapeError("task/layer/adapter dimensions disagree: task d_in=" + std::to_string(task.d_in) +
                         ", layer " + layer.weight().shape_string() + ", plan " + std::to_string(plan.d_out) + "x" +
                         std::to_string(plan.d_in));
    }
    if (is_classification(task)) {
        if (!model.head) {
            throw ConfigError("classification tasks need a model head");
        }
        if (model.head->weight.rows() != task.output_dim || model.head->weight.cols() != plan.d_out) {
            throw ShapeError("head " + model.head->weight.shape_string() + " does not map d_out=" +
                             std::to_string(plan.d_out) + " to " + std::to_string(task.output_dim) + " classes");
        }
    } else if (model.head) {
        throw ConfigError("regression tasks are fit on the adapter output directly; drop the head");
    } else if (task.output_dim != plan.d_out) {
        throw ShapeError("regression targets have " + std::to_string(task.output_dim) + " rows, adapter emits " +
                         std::to_string(plan.d_out));
    }
}

DenseMatrix apply_head(const LinearHead& head, const DenseMatrix& hidden) {
    DenseMatrix logits = matmul(head.weight, hidden);
    for (std::size_t c = 0; c < logits.rows(); ++c) {
        const double b = head.bias(c, 0);
        for (double& v : logits.row(c)) {
            v += b;
        }
    }
    return logits;
}

DenseMatrix gather_columns(const DenseMatrix& m, std::span<const std::size_t> idx) {
    DenseMatrix out(m.rows(), idx.size());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t j = 0; j < idx.size(); ++j) {
            out(r, j) = m(r, idx[j]);
        }
    }
    return out;
}

std::vector<ParamRef> model_parameters(AdaptedModel& model) {
    std::vector<ParamRef> params = trainable_parameters(model.adapter);
    if (model.head) {
        params.push_back({"head.weight", &model.head->weight});
        params.push_back({"head.bias", &model.head->bias});
    }
    return params;
}

// Validation score where larger is better.
double selection_score(const ToyTask& task, double metric) {
    return is_classification(task) ? metric : -metric;
}

double evaluate_split(const AdaptedModel& model, const FrozenLinear& layer, const ToyTask& task,
                      const DataSplit& split) {
    return is_classification(task) ? evaluate_accuracy(model, layer, split) : evaluate_mse(model, layer, split);
}

} // namespace

LinearHead init_head(std::size_t n_classes, std::size_t d_out, Rng& rng) {
    return {rng.normal_matrix(n_classes, d_out, 1.0 / std::sqrt(static_cast<double>(d_out))),
            DenseMatrix(n_classes, 1)};
}

void validate_train_config(const TrainConfig& cfg) {
    if (cfg.batch_size == 0) {
        throw ConfigError("batch_size must be >= 1");
    }
    if (cfg.epochs == 0) {
        throw ConfigError("epochs must be >= 1");
    }
    if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) {
        throw ConfigError("lr must be a finite non-negative number");
    }
    if (!(cfg.weight_decay >= 0.0) || !std::isfinite(cfg.weight_decay)) {
        throw ConfigError("weight_decay must be a finite non-negative number");
    }
}

double evaluate_mse(const AdaptedModel& model, const FrozenLinear& layer, const DataSplit& split) {
    const DenseMatrix out = forward_inference(model.adapter, layer, split.inputs);
    return evaluate_loss({LossKind::MSE, split.targets}, out);
}

double evaluate_accuracy(const AdaptedModel& model, const FrozenLinear& layer, const DataSplit& split) {
    if (!model.head) {
        throw ConfigError("accuracy needs a classification head");
    }
    const DenseMatrix logits = apply_head(*model.head, forward_inference(model.adapter, layer, split.inputs));
    std::size_t correct = 0;
    for (std::size_t b = 0; b < logits.cols(); ++b) {
        std::size_t arg = 0;
        for (std::size_t c = 1; c < logits.rows(); ++c) {
            if (logits(c, b) > logits(arg, b)) {
                arg = c;
            }
        }
        correct += arg == split.labels[b] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(logits.cols());
}

TrainReport train(AdaptedModel& model, const FrozenLinear& layer, const ToyTask& task, const TrainConfig& cfg) {
    validate_train_config(cfg);
    check_model_for_task(model, layer, task);
    const std::size_t n = task.train.size();
    if (n == 0 || task.val.size() == 0) {
        throw ConfigError("task splits must be non-empty");
    }

    TrainReport report;
    report.metric_name = is_classification(task) ? "accuracy" : "mse";
    report.initial_test_metric = evaluate_split(model, layer, task, task.test);

    const std::size_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::uint64_t total_steps = static_cast<std::uint64_t>(batches_per_epoch) * cfg.epochs;

    auto params = model_parameters(model);
    OptimizerState opt = OptimizerState::for_parameters(params, {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
    Rng rng(cfg.seed);
    Rng shuffle_rng = rng.split(0);
    Rng dropout_rng = rng.split(1);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<std::uint8_t> best_adapter;
    std::optional<LinearHead> best_head;
    double best_score = -std::numeric_limits<double>::infinity();

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = n - 1; i > 0; --i) {
            std::swap(order[i], order[shuffle_rng.uniform_index(i + 1)]);
        }
        set_training_mode(model.adapter, cfg.dropout_active);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < batches_per_epoch; ++b) {
            const std::size_t first = b * cfg.batch_size;
            const std::size_t count = std::min(cfg.batch_size, n - first);
            const std::span<const std::size_t> idx(order.data() + first, count);
            const DenseMatrix x = gather_columns(task.train.inputs, idx);
            const DenseMatrix targets = gather_columns(task.train.targets, idx);

            const DenseMatrix hidden = forward(model.adapter, layer, x, dropout_rng);
            GradientSet grads;
            DenseMatrix upstream;
            if (model.head) {
                const DenseMatrix logits = apply_head(*model.head, hidden);
                const LossSpec loss{LossKind::SoftmaxCE, targets};
                grads.loss_value = evaluate_loss(loss, logits);
                const DenseMatrix g_logits = loss_gradient(loss, logits);
                upstream = matmul_tn(model.head->weight, g_logits);
                DenseMatrix g_bias(g_logits.rows(), 1);
                for (std::size_t c = 0; c < g_logits.rows(); ++c) {
                    for (double v : g_logits.row(c)) {
                        g_bias(c, 0) += v;
                    }
                }
                grads.entries.emplace_back("head.weight", matmul_nt(g_logits, hidden));
                grads.entries.emplace_back("head.bias", std::move(g_bias));
            } else {
                const LossSpec loss{LossKind::MSE, targets};
                grads.loss_value = evaluate_loss(loss, hidden);
                upstream = loss_gradient(loss, hidden);
            }
            if (!std::isfinite(grads.loss_value)) {
                throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                      std::to_string(opt.step_count) + " (lr=" + std::to_string(cfg.lr) + ")");
            }
            BackwardResult br = backward(model.adapter, layer, x, upstream);
            for (auto& entry : br.params.entries) {
                grads.entries.push_back(std::move(entry));
            }
            loss_sum += grads.loss_value;
            adamw_step(params, grads, opt, linear_schedule(opt.step_count, total_steps, cfg.lr));
        }
        set_training_mode(model.adapter, false);
        report.epoch_loss.push_back(loss_sum / static_cast<double>(batches_per_epoch));

        const double val = evaluate_split(model, layer, task, task.val);
        report.val_metric.push_back(val);
        if (selection_score(task, val) > best_score) {
            best_score = selection_score(task, val);
            report.best_epoch = epoch;
            best_adapter = encode_checkpoint(model.adapter);
            best_head = model.head;
            if (cfg.checkpoint_dir) {
                const auto path =
                    *cfg.checkpoint_dir / (cfg.checkpoint_prefix + "-epoch" + std::to_string(epoch) + ".klora");
                save_checkpoint(model.adapter, path);
                report.best_checkpoint = path.string();
            } else {
                report.best_checkpoint = cfg.checkpoint_prefix + "-epoch" + std::to_string(epoch);
            }
        }
    }
    report.steps = opt.step_count;

    if (cfg.restore_best && !best_adapter.empty()) {
        model.adapter = decode_checkpoint(best_adapter);
        model.head = std::move(best_head);
    }
    report.final_test_metric = evaluate_split(model, layer, task, task.test);
    return report;
}

double forgetting_delta(double acc_t1_after_t1, double acc_t1_after_t2) noexcept {
    return acc_t1_after_t2 - acc_t1_after_t1;
}

SequentialRunReport run_sequential(const ModelFactory& factory, const FrozenLinear& layer, const ToyTask& task1,
                                   const ToyTask& task2, const TrainConfig& cfg1, const TrainConfig& cfg2,
                                   SequentialMode mode) {
    if (!is_classification(task1) || !is_classification(task2)) {
        throw ConfigError("the sequential protocol measures accuracy and needs classification tasks");
    }
    if (task1.d_in != task2.d_in || task1.output_dim != task2.output_dim) {
        throw ConfigError("sequential tasks must share d_in and class count (task1 " + std::to_string(task1.d_in) +
                          "->" + std::to_string(task1.output_dim) + ", task2 " + std::to_string(task2.d_in) + "->" +
                          std::to_string(task2.output_dim) + ")");
    }
    SequentialRunReport report;
    AdaptedModel model = factory();
    report.phase1 = train(model, layer, task1, cfg1);
    report.acc_t1_after_t1 = evaluate_accuracy(model, layer, task1.test);

    if (mode == SequentialMode::Continue) {
        report.phase2 = train(model, layer, task2, cfg2);
        report.acc_t2_after_t2 = evaluate_accuracy(model, layer, task2.test);
        report.acc_t1_after_t2 = evaluate_accuracy(model, layer, task1.test);
    } else {
        AdaptedModel fresh = factory();
        report.phase2 = train(fresh, layer, task2, cfg2);
        report.acc_t2_after_t2 = evaluate_accuracy(fresh, layer, task2.test);
        report.acc_t1_after_t2 = evaluate_accuracy(model, layer, task1.test);
    }
    report.delta_t1 = forgetting_delta(report.acc_t1_after_t1, report.acc_t1_after_t2);
    return report;
}

} // namespace kronlora
