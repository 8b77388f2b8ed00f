/*
 * Copyright 2026 The GPSL Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gpsl/cli.hpp"
#include "gpsl/decode.hpp"
#include "gpsl/error.hpp"
#include "gpsl/eval.hpp"
#include "gpsl/inference.hpp"

namespace py = pybind11;
using namespace gpsl;

PYBIND11_MODULE(_gpsl, m) {
    m.doc() = "Gaussian-process pseudo-likelihood sequence labeling";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<FormatError>(m, "FormatError", base);
    py::register_exception<EmptyCorpusError>(m, "EmptyCorpusError", base);
    py::register_exception<TemplateError>(m, "TemplateError", base);
    py::register_exception<ArgumentError>(m, "ArgumentError", base);
    py::register_exception<IoError>(m, "IoError", base);
    py::register_exception<VersionError>(m, "VersionError", base);
    py::register_exception<UnsupportedDependencyError>(m, "UnsupportedDependencyError", base);
    py::register_exception<NumericalError>(m, "NumericalError", base);

    m.attr("MISSING_LABEL") = kMissingLabel;

    py::class_<Alphabet>(m, "Alphabet")
        .def("lookup", &Alphabet::lookup)
        .def("name", &Alphabet::name)
        .def("__len__", &Alphabet::size)
        .def_property_readonly("names", &Alphabet::names);

    py::class_<Alphabets>(m, "Alphabets")
        .def_readonly("labels", &Alphabets::labels)
        .def_readonly("features", &Alphabets::features);

    py::class_<Token>(m, "Token")
        .def_readonly("columns", &Token::columns)
        .def_readonly("features", &Token::features)
        .def_readonly("label", &Token::label);

    py::class_<Sentence>(m, "Sentence")
        .def_readonly("tokens", &Sentence::tokens)
        .def("__len__", &Sentence::size);

    py::class_<RawCorpus>(m, "RawCorpus")
        .def_readonly("columns", &RawCorpus::columns)
        .def_property_readonly("sentences",
                               [](const RawCorpus& c) {
                                   std::vector<std::vector<std::vector<std::string>>> out;
                                   for (const auto& s : c.sentences) out.push_back(s.tokens);
                                   return out;
                               })
        .def("num_tokens", &RawCorpus::num_tokens)
        .def("to_conll", [](const RawCorpus& c) {
            std::ostringstream out;
            write_conll(out, c);
            return out.str();
        });

    py::class_<Corpus>(m, "Corpus")
        .def_readonly("sentences", &Corpus::sentences)
        .def_readonly("alphabets", &Corpus::alphabets)
        .def("num_labels", &Corpus::num_labels)
        .def("num_features", &Corpus::num_features)
        .def("num_tokens", &Corpus::num_tokens)
        .def("num_observed", &Corpus::num_observed);

    py::class_<TemplateSet>(m, "TemplateSet")
        .def(py::init<>())
        .def_static("from_lines", &TemplateSet::from_lines)
        .def_static("load", [](const std::filesystem::path& p) { return TemplateSet::load(p); })
        .def_property_readonly("templates", &TemplateSet::templates)
        .def("__len__", &TemplateSet::size);

    m.def("parse_conll", [](const std::string& text) {
        std::istringstream in(text);
        return parse_conll(in, "<string>");
    });
    m.def("read_conll", &read_conll, py::arg("path"));
    m.def(
        "apply_templates",
        [](const RawCorpus& raw, const TemplateSet& templates) {
            Alphabets alphabets;
            return apply_templates(raw, templates, alphabets, false);
        },
        py::arg("raw"), py::arg("templates"));
    m.def("expand_frozen", &expand_frozen, py::arg("raw"), py::arg("templates"), py::arg("alphabets"));
    m.def("mask_labels", &mask_labels, py::arg("corpus"), py::arg("fraction"), py::arg("seed"));
    m.def("synth_templates", &synth_templates);
    m.def("synth_generate_raw", &synth_generate_raw, py::arg("num_labels"), py::arg("length"), py::arg("count"),
          py::arg("strength") = 3.0, py::arg("emission_dim") = 12, py::arg("seed") = 0);
    m.def("synth_generate", &synth_generate, py::arg("num_labels"), py::arg("length"), py::arg("count"),
          py::arg("strength") = 3.0, py::arg("emission_dim") = 12, py::arg("seed") = 0);

    py::enum_<KernelFamily>(m, "KernelFamily")
        .value("linear", KernelFamily::linear)
        .value("squared_exponential", KernelFamily::squared_exponential);

    py::class_<KernelSpec>(m, "KernelSpec")
        .def_static("linear", &KernelSpec::linear, py::arg("sigma_f2") = 1.0)
        .def_static("squared_exponential", &KernelSpec::squared_exponential, py::arg("sigma_f2") = 1.0,
                    py::arg("kappa") = 1.0)
        .def_readwrite("family", &KernelSpec::family)
        .def_readwrite("sigma_f2", &KernelSpec::sigma_f2)
        .def_readwrite("kappa", &KernelSpec::kappa)
        .def_readwrite("jitter", &KernelSpec::jitter)
        .def("__eq__", &KernelSpec::operator==);

    py::class_<DependencySet>(m, "DependencySet")
        .def(py::init<>())
        .def(py::init<std::vector<int>>(), py::arg("offsets"))
        .def_static("parse", &DependencySet::parse)
        .def_property_readonly("offsets", &DependencySet::offsets)
        .def("__len__", &DependencySet::size)
        .def("__str__", &DependencySet::to_string)
        .def("__eq__", &DependencySet::operator==);

    py::class_<VariationalState>(m, "VariationalState")
        .def_readonly("m_U", &VariationalState::m_U)
        .def_readonly("lambda_U", &VariationalState::lambda_U)
        .def_readonly("m_S", &VariationalState::m_S)
        .def_readonly("v_S", &VariationalState::v_S);

    py::class_<TrainedModel>(m, "TrainedModel")
        .def_readonly("alphabets", &TrainedModel::alphabets)
        .def_readonly("templates", &TrainedModel::templates)
        .def_readonly("kernels", &TrainedModel::kernels)
        .def_readonly("deps", &TrainedModel::deps)
        .def_readonly("state", &TrainedModel::state)
        .def("num_labels", &TrainedModel::num_labels)
        .def("num_inputs", &TrainedModel::num_inputs)
        .def("save", [](const TrainedModel& model, const std::filesystem::path& p) { save_model(model, p); })
        .def_static("load", [](const std::filesystem::path& p) { return load_model(p); });

    py::class_<TraceEntry>(m, "TraceEntry")
        .def_readonly("outer", &TraceEntry::outer)
        .def_readonly("inner", &TraceEntry::inner)
        .def_readonly("step", &TraceEntry::step)
        .def_readonly("bound", &TraceEntry::bound)
        .def_readonly("seconds", &TraceEntry::seconds);

    py::class_<TrainOptions>(m, "TrainOptions")
        .def(py::init<>())
        .def_readwrite("inner_tol", &TrainOptions::inner_tol)
        .def_readwrite("outer_tol", &TrainOptions::outer_tol)
        .def_readwrite("max_outer", &TrainOptions::max_outer)
        .def_readwrite("max_inner", &TrainOptions::max_inner)
        .def_readwrite("optimize_hyper", &TrainOptions::optimize_hyper)
        .def_readwrite("hyper_max_steps", &TrainOptions::hyper_max_steps)
        .def_readwrite("grad_tol", &TrainOptions::grad_tol)
        .def_readwrite("newton_max_iter", &TrainOptions::newton_max_iter)
        .def_readwrite("lambda_tol", &TrainOptions::lambda_tol)
        .def_readwrite("lambda_max_sweeps", &TrainOptions::lambda_max_sweeps);

    py::class_<TrainResult>(m, "TrainResult")
        .def_readonly("model", &TrainResult::model)
        .def_readonly("trace", &TrainResult::trace)
        .def_readonly("outer_iterations", &TrainResult::outer_iterations)
        .def_readonly("inner_iterations", &TrainResult::inner_iterations)
        .def_readonly("final_bound", &TrainResult::final_bound)
        .def_readonly("seconds", &TrainResult::seconds);

    m.def("train", &train, py::arg("corpus"), py::arg("templates"), py::arg("deps"), py::arg("kernels"),
          py::arg("options") = TrainOptions{}, py::call_guard<py::gil_scoped_release>());

    py::class_<RnsOptions>(m, "RnsOptions")
        .def(py::init<>())
        .def_readwrite("tol", &RnsOptions::tol)
        .def_readwrite("max_iter", &RnsOptions::max_iter)
        .def_readwrite("keep_snapshots", &RnsOptions::keep_snapshots);

    py::class_<RnsResult>(m, "RnsResult")
        .def_readonly("labels", &RnsResult::labels)
        .def_readonly("table", &RnsResult::table)
        .def_readonly("iterations", &RnsResult::iterations)
        .def_readonly("converged", &RnsResult::converged)
        .def_readonly("snapshots", &RnsResult::snapshots);

    m.def("rns_decode", &rns_decode, py::arg("model"), py::arg("sentence"), py::arg("options") = RnsOptions{});
    m.def("viterbi_decode", &viterbi_decode, py::arg("model"), py::arg("sentence"));

    py::enum_<Decoder>(m, "Decoder").value("rns", Decoder::rns).value("viterbi", Decoder::viterbi);

    py::class_<EvalOptions>(m, "EvalOptions")
        .def(py::init<>())
        .def_readwrite("decoder", &EvalOptions::decoder)
        .def_readwrite("rns", &EvalOptions::rns);

    py::class_<EvalReport>(m, "EvalReport")
        .def_readonly("decoder", &EvalReport::decoder)
        .def_readonly("predictions", &EvalReport::predictions)
        .def_readonly("confidences", &EvalReport::confidences)
        .def_readonly("sentence_loss", &EvalReport::sentence_loss)
        .def_readonly("total_loss", &EvalReport::total_loss)
        .def_readonly("total_counted", &EvalReport::total_counted)
        .def_readonly("mean_loss", &EvalReport::mean_loss)
        .def_readonly("accuracy", &EvalReport::accuracy)
        .def_readonly("mean_iterations", &EvalReport::mean_iterations)
        .def_readonly("max_iterations", &EvalReport::max_iterations)
        .def_readonly("non_converged", &EvalReport::non_converged);

    m.def("evaluate", &evaluate, py::arg("model"), py::arg("corpus"), py::arg("options") = EvalOptions{},
          py::call_guard<py::gil_scoped_release>());
    m.def(
        "hamming",
        [](const std::vector<int>& truth, const std::vector<int>& predicted) {
            const HammingLoss h = hamming(truth, predicted);
            return py::make_tuple(h.loss, h.counted);
        },
        py::arg("truth"), py::arg("predicted"));

    m.def(
        "run_cli",
        [](std::vector<std::string> args) {
            args.insert(args.begin(), "gpsl");
            std::vector<const char*> argv;
            for (const auto& a : args) argv.push_back(a.c_str());
            std::ostringstream out, err;
            const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
