// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <bit>
#include <cmath>

#include "kronlora/checkpoint.hpp"
#include "kronlora/errors.hpp"
#include "kronlora/optimizer.hpp"
#include "kronlora/toy_tasks.hpp"
#include "kronlora/trainer.hpp"
#include "oracles.hpp"

using namespace kronlora;

namespace {

GradientSet grads_for(Adapter& a, double value) {
    GradientSet g;
    for (const auto& p : trainable_parameters(a)) {
        DenseMatrix m(p.value->rows(), p.value->cols());
        for (double& v : m.data()) {
            v = value;
        }
        g.entries.emplace_back(p.name, std::move(m));
    }
    return g;
}

bool same_bits(const Adapter& a, const Adapter& b) {
    return encode_checkpoint(a) == encode_checkpoint(b);
}

struct Fixture {
    AdapterPlan plan = plan_kron_lora({16, 24, false}, 4, {8});
    FrozenLinear layer;
    ToyTask task;

    Fixture() : layer([] {
        Rng rng(101);
        return oracle::random_frozen(16, 24, rng);
    }()) {
        task = make_teacher_regression(layer, plan, 7, 8, {64, 32, 32}, 0.05);
    }

    AdaptedModel model() const {
        Rng rng(7);
        return {init_adapter(plan, rng), std::nullopt};
    }
};

} // namespace

TEST_CASE("AdamW matches a scalar transcription over many steps") {
    const AdapterPlan plan = plan_lora({3, 2, false}, 1);
    Rng rng(31);
    Adapter a = oracle::random_filled(plan, rng);
    const AdamWHyperParams hyper{1e-2, 0.9, 0.999, 1e-8, 0.05};
    auto params = trainable_parameters(a);
    OptimizerState state = OptimizerState::for_parameters(params, hyper);

    std::vector<oracle::ScalarAdamW> scalars;
    std::vector<double> thetas;
    for (const auto& p : params) {
        for (double v : p.value->data()) {
            scalars.push_back({hyper.lr, hyper.beta1, hyper.beta2, hyper.eps, hyper.weight_decay});
            thetas.push_back(v);
        }
    }
    Rng grng(32);
    for (int step = 0; step < 100; ++step) {
        GradientSet g;
        std::vector<double> flat;
        for (const auto& p : params) {
            DenseMatrix m = grng.normal_matrix(p.value->rows(), p.value->cols());
            flat.insert(flat.end(), m.data().begin(), m.data().end());
            g.entries.emplace_back(p.name, std::move(m));
        }
        const double lr_t = linear_schedule(step, 100, hyper.lr);
        adamw_step(params, g, state, lr_t);
        for (std::size_t k = 0; k < thetas.size(); ++k) {
            thetas[k] = scalars[k].step(thetas[k], flat[k], lr_t);
        }
    }
    std::size_t k = 0;
    for (const auto& p : params) {
        for (double v : p.value->data()) {
            CHECK(std::abs(v - thetas[k++]) <= 1e-12);
        }
    }
    CHECK(state.step_count == 100);
}

TEST_CASE("decoupled decay with zero gradient shrinks by 1 - lr * wd") {
    const AdapterPlan plan = plan_lora({2, 2, false}, 1);
    Adapter a = make_adapter(plan, {DenseMatrix{{1.0, -1.0}}, DenseMatrix{{2.0}, {0.5}}});
    auto params = trainable_parameters(a);
    OptimizerState state = OptimizerState::for_parameters(params, {3e-4, 0.9, 0.999, 1e-8, 0.01});
    adamw_step(params, grads_for(a, 0.0), state, 3e-4);
    const double f = 1.0 - 3e-6;
    CHECK(std::get<LoRAAdapter>(a).down == DenseMatrix{{f, -f}});
    CHECK(std::get<LoRAAdapter>(a).up(0, 0) == 2.0 * f);
}

TEST_CASE("zero gradient and zero decay leave parameters unchanged") {
    Rng rng(33);
    Adapter a = oracle::random_filled(plan_kron_lora({8, 12, false}, 2, {4}), rng);
    const Adapter before = a;
    auto params = trainable_parameters(a);
    OptimizerState state = OptimizerState::for_parameters(params, {1e-2, 0.9, 0.999, 1e-8, 0.0});
    for (int i = 0; i < 5; ++i) {
        adamw_step(params, grads_for(a, 0.0), state, 1e-2);
    }
    CHECK(same_bits(a, before));
}

TEST_CASE("constant gradient moves each entry by about lr per step") {
    const AdapterPlan plan = plan_lora({2, 2, false}, 1);
    Adapter a = make_adapter(plan, {DenseMatrix{{0.0, 0.0}}, DenseMatrix{{0.0}, {0.0}}});
    auto params = trainable_parameters(a);
    OptimizerState state = OptimizerState::for_parameters(params, {1e-3, 0.9, 0.999, 1e-8, 0.0});
    for (int i = 0; i < 50; ++i) {
        adamw_step(params, grads_for(a, 0.3), state, 1e-3);
    }
    for (double v : std::get<LoRAAdapter>(a).down.data()) {
        CHECK(v == doctest::Approx(-50e-3).epsilon(1e-6));
    }
}

TEST_CASE("optimizer misuse") {
    Rng rng(34);
    Adapter a = oracle::random_filled(plan_lora({4, 4, false}, 2), rng);
    auto params = trainable_parameters(a);
    OptimizerState state = OptimizerState::for_parameters(params, {});
    GradientSet missing;
    CHECK_THROWS_AS(adamw_step(params, missing, state, 1e-3), StateError);

    GradientSet wrong = grads_for(a, 1.0);
    wrong.entries[0].second = DenseMatrix(3, 3);
    CHECK_THROWS_AS(adamw_step(params, wrong, state, 1e-3), ShapeError);

    OptimizerState empty;
    CHECK_THROWS_AS(adamw_step(params, grads_for(a, 1.0), empty, 1e-3), ShapeError);
}

TEST_CASE("linear schedule") {
    CHECK(linear_schedule(0, 100, 1e-3) == 1e-3);
    CHECK(linear_schedule(50, 100, 1e-3) == doctest::Approx(5e-4));
    CHECK(linear_schedule(100, 100, 1e-3) == 0.0);
    CHECK_THROWS_AS(linear_schedule(0, 0, 1e-3), ConfigError);
    CHECK_THROWS_AS(linear_schedule(101, 100, 1e-3), ConfigError);
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(validate_train_config(cfg));
    cfg.batch_size = 0;
    CHECK_THROWS_AS(validate_train_config(cfg), ConfigError);
    cfg = {};
    cfg.epochs = 0;
    CHECK_THROWS_AS(validate_train_config(cfg), ConfigError);
    cfg = {};
    cfg.lr = -1.0;
    CHECK_THROWS_AS(validate_train_config(cfg), ConfigError);
    cfg = {};
    cfg.weight_decay = std::nan("");
    CHECK_THROWS_AS(validate_train_config(cfg), ConfigError);
}

TEST_CASE("zero learning rate leaves the adapter bit-identical") {
    Fixture fx;
    AdaptedModel m = fx.model();
    const Adapter before = m.adapter;
    TrainConfig cfg;
    cfg.lr = 0.0;
    cfg.epochs = 3;
    const TrainReport r = train(m, fx.layer, fx.task, cfg);
    CHECK(same_bits(m.adapter, before));
    CHECK(r.steps == 3 * 8);
    CHECK(r.initial_test_metric == r.final_test_metric);
}

TEST_CASE("training is deterministic for a fixed seed") {
    Fixture fx;
    TrainConfig cfg;
    cfg.lr = 1e-2;
    cfg.epochs = 4;
    cfg.seed = 5;
    AdaptedModel m1 = fx.model();
    AdaptedModel m2 = fx.model();
    const TrainReport r1 = train(m1, fx.layer, fx.task, cfg);
    const TrainReport r2 = train(m2, fx.layer, fx.task, cfg);
    CHECK(r1.epoch_loss == r2.epoch_loss);
    CHECK(r1.val_metric == r2.val_metric);
    CHECK(same_bits(m1.adapter, m2.adapter));

    cfg.seed = 6;
    AdaptedModel m3 = fx.model();
    const TrainReport r3 = train(m3, fx.layer, fx.task, cfg);
    CHECK(r3.epoch_loss != r1.epoch_loss);
}

TEST_CASE("training reduces teacher-regression error and reports the best epoch") {
    Fixture fx;
    AdaptedModel m = fx.model();
    TrainConfig cfg;
    cfg.lr = 1e-2;
    cfg.epochs = 20;
    cfg.dropout_active = false;
    const TrainReport r = train(m, fx.layer, fx.task, cfg);
    CHECK(r.metric_name == "mse");
    CHECK(r.final_test_metric < 0.1 * r.initial_test_metric);
    REQUIRE(r.best_epoch >= 1);
    CHECK(r.val_metric[r.best_epoch - 1] == *std::min_element(r.val_metric.begin(), r.val_metric.end()));
}

TEST_CASE("the frozen layer is never modified") {
    Fixture fx;
    const DenseMatrix w = fx.layer.weight();
    AdaptedModel m = fx.model();
    TrainConfig cfg;
    cfg.lr = 1e-2;
    cfg.epochs = 2;
    (void)train(m, fx.layer, fx.task, cfg);
    CHECK(fx.layer.weight() == w);
}

TEST_CASE("an exploding learning rate raises DivergenceError") {
    Fixture fx;
    AdaptedModel m = fx.model();
    TrainConfig cfg;
    cfg.lr = 1e200;
    cfg.weight_decay = 0.0;
    cfg.epochs = 5;
    CHECK_THROWS_AS(train(m, fx.layer, fx.task, cfg), DivergenceError);
}

TEST_CASE("model/task mismatches are rejected") {
    Fixture fx;
    AdaptedModel with_head = fx.model();
    Rng rng(1);
    with_head.head = init_head(3, 24, rng);
    CHECK_THROWS_AS(train(with_head, fx.layer, fx.task, {}), ConfigError);

    const ToyTask cls = make_cluster_classification(16, 3, 9, {32, 16, 16});
    AdaptedModel no_head = fx.model();
    CHECK_THROWS_AS(train(no_head, fx.layer, cls, {}), ConfigError);

    AdaptedModel wrong_head = fx.model();
    wrong_head.head = init_head(4, 24, rng);
    CHECK_THROWS_AS(train(wrong_head, fx.layer, cls, {}), ShapeError);
}

TEST_CASE("forgetting delta is accuracy after task 2 minus after task 1") {
    CHECK(forgetting_delta(0.7351, 0.5877) == doctest::Approx(-0.1474).epsilon(1e-12));
    CHECK(forgetting_delta(0.5, 0.5) == 0.0);
}

TEST_CASE("sequential protocol") {
    Rng rng(41);
    const FrozenLinear layer = oracle::random_frozen(16, 16, rng);
    const ToyTask t1 = make_cluster_classification(16, 3, 100, {96, 48, 96}, 1.0);
    const ToyTask t2 = make_cluster_classification(16, 3, 200, {96, 48, 96}, 1.0);
    const AdapterPlan plan = plan_kron_lora({16, 16, false}, 4, {8});
    const ModelFactory factory = [&] {
        Rng init(3);
        AdaptedModel m{init_adapter(plan, init), std::nullopt};
        Rng head_rng(4);
        m.head = init_head(3, 16, head_rng);
        return m;
    };
    TrainConfig cfg;
    cfg.lr = 3e-3;
    cfg.epochs = 5;

    SUBCASE("fresh models per task leave task 1 untouched") {
        const SequentialRunReport r = run_sequential(factory, layer, t1, t2, cfg, cfg, SequentialMode::FreshPerTask);
        CHECK(r.delta_t1 == 0.0);
        CHECK(r.acc_t1_after_t2 == r.acc_t1_after_t1);
    }
    SUBCASE("training twice on the same task barely moves task-1 accuracy") {
        const SequentialRunReport r = run_sequential(factory, layer, t1, t1, cfg, cfg, SequentialMode::Continue);
        CHECK(r.delta_t1 >= -0.02);
        CHECK(r.delta_t1 == doctest::Approx(r.acc_t1_after_t2 - r.acc_t1_after_t1));
    }
    SUBCASE("delta matches its definition in continue mode") {
        const SequentialRunReport r = run_sequential(factory, layer, t1, t2, cfg, cfg, SequentialMode::Continue);
        CHECK(r.delta_t1 == r.acc_t1_after_t2 - r.acc_t1_after_t1);
        CHECK(r.acc_t1_after_t1 > 1.0 / 3.0);
    }
    SUBCASE("regression tasks are rejected") {
        Rng r2(5);
        const FrozenLinear l2 = oracle::random_frozen(16, 16, r2);
        const ToyTask reg = make_teacher_regression(l2, plan, 1, 2, {8, 8, 8});
        CHECK_THROWS_AS(run_sequential(factory, layer, reg, t2, cfg, cfg), ConfigError);
    }
}

TEST_CASE("toy task generators are seeded") {
    const ToyTask a = make_cluster_classification(8, 4, 12, {20, 10, 10});
    const ToyTask b = make_cluster_classification(8, 4, 12, {20, 10, 10});
    CHECK(a.train.inputs == b.train.inputs);
    CHECK(a.train.labels == b.train.labels);
    CHECK(a.output_dim == 4);
    CHECK(a.train.targets.rows() == 4);
    CHECK(parse_toy_task_kind(to_string(ToyTaskKind::ClusterClassification)) == ToyTaskKind::ClusterClassification);
    CHECK_THROWS_AS(parse_toy_task_kind("imagenet"), ConfigError);
    CHECK_THROWS_AS(make_cluster_classification(8, 1, 1), ConfigError);
}
