// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "kronlora/toy_tasks.hpp"

#include <cctype>
#include <string>

#include "kronlora/errors.hpp"
#include "kronlora/rng.hpp"

namespace kronlora {

namespace {

void require_sizes(const SplitSizes& sizes) {
    if (sizes.train == 0 || sizes.val == 0 || sizes.test == 0) {
        throw ConfigError("toy task splits must all be non-empty");
    }
}

DataSplit regression_split(const FrozenLinear& layer, const DenseMatrix& delta, std::size_t n, Rng& rng) {
    DataSplit split;
    split.inputs = rng.normal_matrix(layer.d_in(), n);
    split.targets = layer.apply(split.inputs);
    add_in_place(split.targets, matmul(delta, split.inputs));
    return split;
}

DataSplit cluster_split(const DenseMatrix& centres, std::size_t n, Rng& rng) {
    const std::size_t d_in = centres.rows();
    const std::size_t classes = centres.cols();
    DataSplit split;
    split.inputs = DenseMatrix(d_in, n);
    split.targets = DenseMatrix(classes, n);
    split.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = rng.uniform_index(classes);
        split.labels[i] = label;
        split.targets(label, i) = 1.0;
        for (std::size_t d = 0; d < d_in; ++d) {
            split.inputs(d, i) = centres(d, label) + rng.normal();
        }
    }
    return split;
}

} // namespace

std::string_view to_string(ToyTaskKind kind) noexcept {
    return kind == ToyTaskKind::TeacherRegression ? "teacher_regression" : "cluster_classification";
}

ToyTaskKind parse_toy_task_kind(std::string_view text) {
    std::string norm;
    for (char c : text) {
        norm.push_back(c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (norm == "teacher_regression") {
        return ToyTaskKind::TeacherRegression;
    }
    if (norm == "cluster_classification") {
        return ToyTaskKind::ClusterClassification;
    }
    throw ConfigError("unknown task '" + std::string(text) +
                      "' (expected teacher_regression or cluster_classification)");
}

ToyTask make_teacher_regression(const FrozenLinear& layer, const AdapterPlan& plan, std::uint64_t init_seed,
                                std::uint64_t task_seed, const SplitSizes& sizes, double perturbation) {
    require_sizes(sizes);
    if (layer.d_in() != plan.d_in || layer.d_out() != plan.d_out) {
        throw ShapeError("teacher plan does not match the frozen layer " + layer.weight().shape_string());
    }
    Rng init_rng(init_seed);
    Adapter teacher = init_adapter(plan, init_rng);
    Rng rng(task_seed);
    Rng perturb = rng.split(0);
    for (const ParamRef& p : trainable_parameters(teacher)) {
        for (double& v : p.value->data()) {
            v += perturb.normal(0.0, perturbation);
        }
    }
    ToyTask task;
    task.kind = ToyTaskKind::TeacherRegression;
    task.seed = task_seed;
    task.d_in = plan.d_in;
    task.output_dim = plan.d_out;
    task.teacher_delta = expand_delta(teacher);
    Rng data = rng.split(1);
    task.train = regression_split(layer, *task.teacher_delta, sizes.train, data);
    task.val = regression_split(layer, *task.teacher_delta, sizes.val, data);
    task.test = regression_split(layer, *task.teacher_delta, sizes.test, data);
    return task;
}

ToyTask make_cluster_classification(std::size_t d_in, std::size_t n_classes, std::uint64_t seed,
                                    const SplitSizes& sizes, double separation) {
    require_sizes(sizes);
    if (d_in == 0 || n_classes < 2) {
        throw ConfigError("cluster classification needs d_in >= 1 and at least 2 classes");
    }
    Rng rng(seed);
    Rng centre_rng = rng.split(0);
    const DenseMatrix centres = centre_rng.normal_matrix(d_in, n_classes, separation);
    ToyTask task;
    task.kind = ToyTaskKind::ClusterClassification;
    task.seed = seed;
    task.d_in = d_in;
    task.output_dim = n_classes;
    Rng data = rng.split(1);
    task.train = cluster_split(centres, sizes.train, data);
    task.val = cluster_split(centres, sizes.val, data);
    task.test = cluster_split(centres, sizes.test, data);
    return task;
}

} // namespace kronlora
