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

#include "gpsl/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "gpsl/corpus.hpp"
#include "gpsl/decode.hpp"
#include "gpsl/error.hpp"
#include "gpsl/eval.hpp"
#include "gpsl/inference.hpp"
#include "gpsl/model.hpp"

namespace gpsl {

namespace {

std::vector<KernelSpec> kernels_from(const RunConfig& cfg) {
    KernelSpec spec;
    spec.family = kernel_family_from_string(cfg.kernel);
    spec.sigma_f2 = cfg.sigma_f2;
    spec.kappa = cfg.kappa;
    spec.jitter = cfg.jitter.value_or(1e-6 * cfg.sigma_f2);
    spec.validate();
    return {spec};
}

TrainOptions train_options_from(const RunConfig& cfg) {
    TrainOptions opts;
    opts.inner_tol = cfg.inner_tol;
    opts.outer_tol = cfg.outer_tol;
    opts.max_outer = cfg.max_outer;
    opts.optimize_hyper = !cfg.no_hyper;
    if (!(opts.inner_tol > 0.0) || !(opts.outer_tol > 0.0)) throw ArgumentError("tolerances must be > 0");
    if (opts.max_outer < 1) throw ArgumentError("--max-outer must be >= 1");
    return opts;
}

EvalOptions eval_options_from(const RunConfig& cfg) {
    EvalOptions opts;
    opts.decoder = decoder_from_string(cfg.decoder);
    opts.rns.tol = cfg.rns_tol;
    opts.rns.max_iter = cfg.rns_max_iter;
    return opts;
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw ArgumentError(std::string("missing required flag ") + flag);
}

void require_file(const std::string& path, const char* what) {
    if (!std::filesystem::exists(path)) throw IoError(std::string(what) + " not found: '" + path + "'");
}

std::vector<double> parse_fractions(const std::string& text) {
    std::vector<double> out;
    std::stringstream in(text);
    for (std::string item; std::getline(in, item, ',');) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw ArgumentError("bad fraction '" + item + "'");
        }
    }
    if (out.empty()) throw ArgumentError("no sweep fractions given");
    return out;
}

std::vector<DependencySet> parse_variants(const std::string& text) {
    std::vector<DependencySet> out;
    std::stringstream in(text);
    for (std::string item; std::getline(in, item, ';');) out.push_back(DependencySet::parse(item));
    if (out.empty()) throw ArgumentError("no dependency variants given");
    return out;
}

class OutputFile {
public:
    OutputFile(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
        if (!path.empty()) {
            file_.open(path, std::ios::binary | std::ios::trunc);
            if (!file_) throw IoError("cannot write output file '" + path + "'");
            stream_ = &file_;
        }
    }
    std::ostream& stream() { return *stream_; }
    void close() {
        if (file_.is_open()) {
            file_.close();
            if (!file_) throw IoError("failed writing output file");
        }
    }

private:
    std::ofstream file_;
    std::ostream* stream_;
};

} // namespace

int cmd_train(const RunConfig& cfg, std::ostream& out) {
    require(cfg.data, "--data");
    require(cfg.templ, "--template");
    require(cfg.out, "--out");
    require_file(cfg.data, "training data");
    require_file(cfg.templ, "template file");

    const DependencySet deps = DependencySet::parse(cfg.deps);
    const auto kernels = kernels_from(cfg);
    const TemplateSet templates = TemplateSet::load(cfg.templ);
    const RawCorpus raw = read_conll(cfg.data);
    Alphabets alphabets;
    Corpus corpus = apply_templates(raw, templates, alphabets, false);
    if (cfg.mask_fraction > 0.0) corpus = mask_labels(corpus, cfg.mask_fraction, cfg.seed);

    TrainOptions opts = train_options_from(cfg);
    TrainResult result = train(corpus, templates, deps, kernels, opts);
    save_model(result.model, std::filesystem::path(cfg.out));
    if (!cfg.trace.empty()) {
        OutputFile trace(cfg.trace, out);
        write_trace_csv(trace.stream(), result.trace);
        trace.close();
    }
    char line[256];
    std::snprintf(line, sizeof line, "final_bound=%.10g outer_iterations=%d wall_seconds=%.3f\n",
                  result.final_bound, result.outer_iterations, result.seconds);
    out << line;
    return kExitOk;
}

int cmd_predict(const RunConfig& cfg, std::ostream& out) {
    require(cfg.model, "--model");
    require(cfg.test, "--test");
    require_file(cfg.model, "model file");
    require_file(cfg.test, "test data");

    const TrainedModel model = load_model(std::filesystem::path(cfg.model));
    const EvalOptions opts = eval_options_from(cfg);
    if (opts.decoder == Decoder::viterbi && !model.deps.is_previous_chain())
        throw UnsupportedDependencyError("viterbi decoding needs the dependency set {-1}, model has {" +
                                         model.deps.to_string() + "}");
    const TemplateSet templates = cfg.templ.empty() ? model.templates : TemplateSet::load(cfg.templ);
    const RawCorpus raw = read_conll(cfg.test);
    const Corpus corpus = expand_frozen(raw, templates, model.alphabets);

    std::vector<std::vector<std::string>> extra;
    long iterations = 0;
    for (const auto& sentence : corpus.sentences) {
        if (opts.decoder == Decoder::rns) {
            const RnsResult r = rns_decode(model, sentence, opts.rns);
            iterations += r.iterations;
            for (std::size_t l = 0; l < r.labels.size(); ++l) {
                std::vector<std::string> cols{model.alphabets.labels.name(r.labels[l])};
                if (cfg.confidence) {
                    char buf[32];
                    std::snprintf(buf, sizeof buf, "%.6f", r.table.row(static_cast<Eigen::Index>(l)).maxCoeff());
                    cols.emplace_back(buf);
                }
                extra.push_back(std::move(cols));
            }
        } else {
            for (int y : viterbi_decode(model, sentence)) extra.push_back({model.alphabets.labels.name(y)});
        }
    }
    OutputFile file(cfg.out, out);
    write_conll(file.stream(), raw, extra);
    file.close();
    if (opts.decoder == Decoder::rns) {
        char line[128];
        std::snprintf(line, sizeof line, "mean_rns_iterations=%.3f\n",
                      static_cast<double>(iterations) / static_cast<double>(corpus.sentences.size()));
        // keep stdout clean when predictions go there
        (cfg.out.empty() ? std::cerr : out) << line;
    }
    return kExitOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
    if (!cfg.sweep_fractions.empty()) {
        require(cfg.data, "--data");
        require(cfg.test, "--test");
        require(cfg.templ, "--template");
        require_file(cfg.data, "training data");
        require_file(cfg.test, "test data");
        require_file(cfg.templ, "template file");
        const TemplateSet templates = TemplateSet::load(cfg.templ);
        Alphabets alphabets;
        const Corpus train_corpus = apply_templates(read_conll(cfg.data), templates, alphabets, false);
        const Corpus test_corpus = expand_frozen(read_conll(cfg.test), templates, train_corpus.alphabets);
        const SweepTable table =
            missing_sweep(train_corpus, test_corpus, templates, parse_fractions(cfg.sweep_fractions),
                          parse_variants(cfg.sweep_deps), kernels_from(cfg), train_options_from(cfg),
                          eval_options_from(cfg), cfg.seed);
        OutputFile file(cfg.out, out);
        write_sweep_csv(file.stream(), cfg.dataset, table);
        file.close();
        return kExitOk;
    }

    require(cfg.test, "--test");
    require_file(cfg.test, "gold data");
    EvalReport report;
    DependencySet deps;
    if (!cfg.pred.empty()) {
        require_file(cfg.pred, "prediction file");
        const RawCorpus gold = read_conll(cfg.test);
        const RawCorpus pred = read_conll(cfg.pred);
        if (pred.columns <= gold.columns || gold.sentences.size() != pred.sentences.size())
            throw FormatError("prediction file does not line up with the gold file");
        Alphabet names;
        report.decoder = decoder_from_string(cfg.decoder);
        for (std::size_t s = 0; s < gold.sentences.size(); ++s) {
            const auto& g = gold.sentences[s].tokens;
            const auto& p = pred.sentences[s].tokens;
            if (g.size() != p.size()) throw FormatError("sentence " + std::to_string(s) + " differs in length");
            std::vector<int> truth;
            std::vector<int> guess;
            for (std::size_t l = 0; l < g.size(); ++l) {
                const std::string& label = g[l].back();
                truth.push_back(label == kMissingLabelString ? kMissingLabel : names.insert(label));
                guess.push_back(names.insert(p[l][static_cast<std::size_t>(gold.columns)]));
            }
            const HammingLoss h = hamming(truth, guess);
            report.sentence_loss.push_back(h.loss);
            report.sentence_counted.push_back(h.counted);
            report.total_loss += h.loss;
            report.total_counted += h.counted;
        }
        if (report.total_counted == 0) throw ArgumentError("gold file has no labelled tokens");
        report.mean_loss = static_cast<double>(report.total_loss) / static_cast<double>(report.total_counted);
        report.accuracy = 1.0 - report.mean_loss;
    } else {
        require(cfg.model, "--model or --pred");
        require_file(cfg.model, "model file");
        const TrainedModel model = load_model(std::filesystem::path(cfg.model));
        const TemplateSet templates = cfg.templ.empty() ? model.templates : TemplateSet::load(cfg.templ);
        const Corpus corpus = expand_frozen(read_conll(cfg.test), templates, model.alphabets);
        report = evaluate(model, corpus, eval_options_from(cfg));
        deps = model.deps;
    }
    OutputFile file(cfg.out, out);
    write_report_header(file.stream());
    write_report_row(file.stream(), cfg.dataset, report, 0.0, deps);
    file.close();
    return kExitOk;
}

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
    const RawCorpus raw =
        synth_generate_raw(cfg.labels, cfg.length, cfg.count, cfg.strength, cfg.emission_dim, cfg.seed);
    OutputFile file(cfg.out, out);
    write_conll(file.stream(), raw);
    file.close();
    return kExitOk;
}

namespace {

// Fills options not given on the command line from a TOML/INI file.
void apply_config_file(CLI::App& cmd, const std::string& path) {
    if (!std::filesystem::exists(path)) throw IoError("cannot open config file " + path);
    for (const CLI::ConfigItem& item : CLI::ConfigTOML().from_file(path)) {
        if (item.name == "++" || item.name == "--") continue;
        if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents[0] == cmd.get_name()))
            continue;
        CLI::Option* opt = cmd.get_option_no_throw("--" + item.name);
        if (opt == nullptr) throw ArgumentError("unknown config key " + item.name + " in " + path);
        if (opt->count() > 0) continue;
        opt->add_result(item.inputs);
        opt->run_callback();
    }
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    CLI::App app{"Gaussian-process pseudo-likelihood sequence labeling"};
    app.require_subcommand(1);

    auto* train_cmd = app.add_subcommand("train", "Train a model from a CoNLL file");
    auto* predict_cmd = app.add_subcommand("predict", "Label a CoNLL file with a trained model");
    auto* eval_cmd = app.add_subcommand("eval", "Score predictions, a model, or run a missing-label sweep");
    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic CoNLL corpus");
    std::string config_path;
    for (auto* c : {train_cmd, predict_cmd, eval_cmd, synth_cmd})
        c->add_option("--config", config_path, "Optional TOML/INI file whose keys mirror the long flags");

    auto add_kernel = [&](CLI::App* c) {
        c->add_option("--kernel", cfg.kernel, "Covariance family: linear or se")->capture_default_str();
        c->add_option("--sigma-f2", cfg.sigma_f2, "Signal variance")->capture_default_str();
        c->add_option("--kappa", cfg.kappa, "Inverse length-scale (se only)")->capture_default_str();
        c->add_option("--jitter", cfg.jitter, "Diagonal jitter (default 1e-6 * sigma_f2)");
        c->add_option("--inner-tol", cfg.inner_tol, "Relative bound increase ending the inner loop")
            ->capture_default_str();
        c->add_option("--outer-tol", cfg.outer_tol, "Relative bound increase ending the outer loop")
            ->capture_default_str();
        c->add_option("--max-outer", cfg.max_outer, "Maximum outer iterations")->capture_default_str();
        c->add_flag("--no-hyper", cfg.no_hyper, "Keep kernel hyperparameters fixed");
    };
    auto add_decode = [&](CLI::App* c) {
        c->add_option("--decoder", cfg.decoder, "rns or viterbi")->capture_default_str();
        c->add_option("--rns-tol", cfg.rns_tol, "RNS convergence tolerance")->capture_default_str();
        c->add_option("--rns-max-iter", cfg.rns_max_iter, "RNS iteration cap")->capture_default_str();
    };

    train_cmd->add_option("--data", cfg.data, "Training CoNLL file");
    train_cmd->add_option("--template", cfg.templ, "CRF++ unigram template file");
    train_cmd->add_option("--deps", cfg.deps, "Dependency offsets, e.g. -1 or -2,-1,1,2")->capture_default_str();
    train_cmd->add_option("--out", cfg.out, "Model file to write");
    train_cmd->add_option("--trace", cfg.trace, "Write the bound trace as CSV");
    train_cmd->add_option("--mask-fraction", cfg.mask_fraction, "Hide this fraction of training labels");
    train_cmd->add_option("--seed", cfg.seed, "Seed for label masking");
    add_kernel(train_cmd);

    predict_cmd->add_option("--model", cfg.model, "Model file");
    predict_cmd->add_option("--test", cfg.test, "CoNLL file to label");
    predict_cmd->add_option("--template", cfg.templ, "Override the model's templates");
    predict_cmd->add_option("--out", cfg.out, "Prediction file (stdout if omitted)");
    predict_cmd->add_flag("--confidence", cfg.confidence, "Append the max RNS value per token");
    add_decode(predict_cmd);

    eval_cmd->add_option("--test", cfg.test, "Gold CoNLL file");
    eval_cmd->add_option("--pred", cfg.pred, "Prediction file from `predict`");
    eval_cmd->add_option("--model", cfg.model, "Model file (decodes --test directly)");
    eval_cmd->add_option("--data", cfg.data, "Training CoNLL file (sweep mode)");
    eval_cmd->add_option("--template", cfg.templ, "Template file");
    eval_cmd->add_option("--out", cfg.out, "Report file (stdout if omitted)");
    eval_cmd->add_option("--dataset", cfg.dataset, "Dataset name for the report")->capture_default_str();
    eval_cmd->add_option("--sweep-fractions", cfg.sweep_fractions, "Missing-label fractions, e.g. 0.05,0.5");
    eval_cmd->add_option("--sweep-deps", cfg.sweep_deps, "Dependency variants separated by ';'")
        ->capture_default_str();
    eval_cmd->add_option("--seed", cfg.seed, "Seed for label masking");
    add_kernel(eval_cmd);
    add_decode(eval_cmd);

    synth_cmd->add_option("--labels", cfg.labels, "Label count J")->capture_default_str();
    synth_cmd->add_option("--length", cfg.length, "Sentence length L")->capture_default_str();
    synth_cmd->add_option("--count", cfg.count, "Sentence count N")->capture_default_str();
    synth_cmd->add_option("--strength", cfg.strength, "Transition strength")->capture_default_str();
    synth_cmd->add_option("--emission-dim", cfg.emission_dim, "Signal vocabulary size")->capture_default_str();
    synth_cmd->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
    synth_cmd->add_option("--out", cfg.out, "CoNLL file to write (stdout if omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (!config_path.empty()) {
            for (auto* c : {train_cmd, predict_cmd, eval_cmd, synth_cmd})
                if (*c) apply_config_file(*c, config_path);
        }
        if (*train_cmd) return cmd_train(cfg, out);
        if (*predict_cmd) return cmd_predict(cfg, out);
        if (*eval_cmd) return cmd_eval(cfg, out);
        if (*synth_cmd) return cmd_synth(cfg, out);
    } catch (const NumericalError& e) {
        err << "gpsl: numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const Error& e) {
        err << "gpsl: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "gpsl: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

} // namespace gpsl
