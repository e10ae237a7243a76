// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "kronlora/adapters.hpp"
#include "kronlora/checkpoint.hpp"
#include "kronlora/commands.hpp"
#include "kronlora/config.hpp"
#include "kronlora/errors.hpp"

namespace py = pybind11;
using namespace kronlora;

namespace {

// Reports cross the boundary as JSON text; the Python side decodes them.
std::string dump(const Json& j) {
    return j.dump();
}

py::array_t<double> to_numpy(const DenseMatrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    auto view = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            view(i, j) = m(i, j);
        }
    }
    return out;
}

DenseMatrix from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) {
        throw ShapeError("expected a 2-D array, got " + std::to_string(a.ndim()) + " dimensions");
    }
    const auto rows = static_cast<std::size_t>(a.shape(0));
    const auto cols = static_cast<std::size_t>(a.shape(1));
    return DenseMatrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

py::dict tensors_of(const Adapter& adapter) {
    py::dict out;
    for (const auto& p : trainable_parameters(adapter)) {
        out[py::str(p.name)] = to_numpy(*p.value);
    }
    return out;
}

Adapter adapter_from(const AdapterPlan& plan, const py::dict& tensors) {
    std::vector<DenseMatrix> ordered;
    for (const auto& name : parameter_names(plan.kind)) {
        if (!tensors.contains(name)) {
            throw StateError("missing tensor '" + name + "'");
        }
        ordered.push_back(from_numpy(tensors[py::str(name)].cast<py::array_t<double>>()));
    }
    return make_adapter(plan, std::move(ordered));
}

KeyValueConfig config_from(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    return KeyValueConfig::parse(in, source);
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core of the kronlora package.";
    m.attr("__version__") = std::string(library_version());

    auto base = py::register_exception<Error>(m, "KronloraError", PyExc_RuntimeError);
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<PlanningError>(m, "PlanningError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<StateError>(m, "StateError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<CorruptionError>(m, "CorruptionError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());

    py::enum_<AdapterKind>(m, "AdapterKind")
        .value("LORA", AdapterKind::LoRA)
        .value("KRONA", AdapterKind::KronA)
        .value("KRONLORA", AdapterKind::KronLoRA);
    m.def("parse_adapter_kind", [](const std::string& s) { return parse_adapter_kind(s); });

    py::class_<AdapterPlan>(m, "AdapterPlan")
        .def_readonly("kind", &AdapterPlan::kind)
        .def_readonly("d_in", &AdapterPlan::d_in)
        .def_readonly("d_out", &AdapterPlan::d_out)
        .def_readonly("a1", &AdapterPlan::a1)
        .def_readonly("a2", &AdapterPlan::a2)
        .def_readonly("b1", &AdapterPlan::b1)
        .def_readonly("b2", &AdapterPlan::b2)
        .def_readonly("r", &AdapterPlan::r)
        .def_readonly("alpha", &AdapterPlan::alpha)
        .def_readonly("dropout_p", &AdapterPlan::dropout_p)
        .def_readonly("degenerate_factorization", &AdapterPlan::degenerate_factorization)
        .def_property_readonly("scale", &AdapterPlan::scale)
        .def_property_readonly("param_count", [](const AdapterPlan& p) { return param_count(p); })
        .def_property_readonly("checkpoint_size", [](const AdapterPlan& p) { return checkpoint_size(p); })
        .def("_json", [](const AdapterPlan& p) { return dump(to_json(p)); })
        .def(py::self == py::self)
        .def("__repr__", [](const AdapterPlan& p) { return "AdapterPlan(" + to_json(p).dump() + ")"; });

    m.def(
        "plan_kron_lora",
        [](std::size_t d_in, std::size_t d_out, std::size_t r, std::size_t target_slice,
           std::optional<std::size_t> a2, bool vocab, double alpha, double dropout) {
            KronLoRAPlanOptions o;
            o.target_slice = target_slice;
            o.fixed_a2 = a2;
            o.alpha = alpha;
            o.dropout_p = dropout;
            return plan_kron_lora({d_in, d_out, vocab}, r, o);
        },
        py::arg("d_in"), py::arg("d_out"), py::arg("r") = 8, py::arg("target_slice") = kDefaultTargetSlice,
        py::arg("a2") = py::none(), py::arg("vocab") = false, py::arg("alpha") = kDefaultAlpha,
        py::arg("dropout") = kDefaultDropout);
    m.def(
        "plan_lora",
        [](std::size_t d_in, std::size_t d_out, std::size_t r, double alpha, double dropout) {
            return plan_lora({d_in, d_out, false}, r, alpha, dropout);
        },
        py::arg("d_in"), py::arg("d_out"), py::arg("r") = 8, py::arg("alpha") = kDefaultAlpha,
        py::arg("dropout") = kDefaultDropout);
    m.def(
        "plan_krona",
        [](std::size_t d_in, std::size_t d_out, double alpha, double dropout) {
            return plan_krona({d_in, d_out, false}, alpha, dropout);
        },
        py::arg("d_in"), py::arg("d_out"), py::arg("alpha") = kDefaultAlpha, py::arg("dropout") = kDefaultDropout);

    m.def("parameter_names", &parameter_names);
    m.def(
        "init_tensors",
        [](const AdapterPlan& plan, std::uint64_t seed) {
            Rng rng(seed);
            return tensors_of(init_adapter(plan, rng));
        },
        py::arg("plan"), py::arg("seed"));
    m.def(
        "expand_delta", [](const AdapterPlan& plan, const py::dict& t) { return to_numpy(expand_delta(adapter_from(plan, t))); },
        py::arg("plan"), py::arg("tensors"));
    m.def(
        "save_checkpoint",
        [](const std::filesystem::path& path, const AdapterPlan& plan, const py::dict& t) {
            return save_checkpoint(adapter_from(plan, t), path);
        },
        py::arg("path"), py::arg("plan"), py::arg("tensors"));
    m.def(
        "load_checkpoint",
        [](const std::filesystem::path& path) {
            const Adapter a = load_checkpoint(path);
            return py::make_tuple(plan_of(a), tensors_of(a));
        },
        py::arg("path"));

    m.def(
        "verify_json",
        [](std::uint64_t seed, std::size_t trials, bool sabotage, std::optional<std::string> suite) {
            VerifyRequest req;
            req.trials = trials;
            req.sabotage = sabotage;
            req.only_suite = std::move(suite);
            const CommandResult r = cmd_verify(req, seed);
            return py::make_tuple(r.exit_code, dump(r.report));
        },
        py::arg("seed") = 0, py::arg("trials") = 200, py::arg("sabotage") = false, py::arg("suite") = py::none());
    m.def(
        "plan_json",
        [](std::size_t d_in, std::size_t d_out, std::size_t r, std::uint64_t seed, std::size_t target_slice,
           std::optional<std::size_t> a2, bool vocab) {
            PlanRequest req;
            req.layer = {d_in, d_out, vocab};
            req.r = r;
            req.target_slice = target_slice;
            req.fixed_a2 = a2;
            return dump(cmd_plan(req, seed));
        },
        py::arg("d_in"), py::arg("d_out"), py::arg("r") = 8, py::arg("seed") = 0,
        py::arg("target_slice") = kDefaultTargetSlice, py::arg("a2") = py::none(), py::arg("vocab") = false);
    m.def(
        "bench_json",
        [](std::size_t d_in, std::size_t d_out, std::size_t r, std::size_t batch, std::size_t repeats,
           std::uint64_t seed) {
            BenchRequest req;
            req.d_in = d_in;
            req.d_out = d_out;
            req.r = r;
            req.batch = batch;
            req.repeats = repeats;
            py::gil_scoped_release release;
            return dump(cmd_bench(req, seed));
        },
        py::arg("d_in") = 4096, py::arg("d_out") = 4096, py::arg("r") = 8, py::arg("batch") = 8,
        py::arg("repeats") = 5, py::arg("seed") = 0);
    m.def(
        "train_json",
        [](const std::string& config_text, std::uint64_t seed, std::optional<std::filesystem::path> out) {
            return dump(cmd_train(config_from(config_text, "<python>"), seed, out));
        },
        py::arg("config_text"), py::arg("seed") = 0, py::arg("out") = py::none());
    m.def(
        "sequential_json",
        [](const std::string& config_text, std::uint64_t seed, std::optional<std::filesystem::path> out) {
            return dump(cmd_sequential(config_from(config_text, "<python>"), seed, out));
        },
        py::arg("config_text"), py::arg("seed") = 0, py::arg("out") = py::none());
    m.def("strip_volatile_json", [](const std::string& text) { return dump(strip_volatile(Json::parse(text))); });
}
