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

#include "gpsl/eval.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "gpsl/error.hpp"

namespace gpsl {

HammingLoss hamming(std::span<const int> truth, std::span<const int> predicted) {
    if (truth.size() != predicted.size()) throw ArgumentError("hamming: sequences differ in length");
    HammingLoss h;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] == kMissingLabel) continue;
        ++h.counted;
        if (truth[i] != predicted[i]) ++h.loss;
    }
    return h;
}

std::string to_string(Decoder decoder) { return decoder == Decoder::rns ? "rns" : "viterbi"; }

Decoder decoder_from_string(const std::string& name) {
    if (name == "rns") return Decoder::rns;
    if (name == "viterbi") return Decoder::viterbi;
    throw ArgumentError("unknown decoder '" + name + "' (expected rns or viterbi)");
}

EvalReport evaluate(const TrainedModel& model, const Corpus& corpus, const EvalOptions& opts) {
    if (corpus.sentences.empty()) throw EmptyCorpusError("evaluate: empty corpus");
    if (opts.decoder == Decoder::viterbi && !model.deps.is_previous_chain())
        throw UnsupportedDependencyError("viterbi decoding needs the dependency set {-1}, model has {" +
                                         model.deps.to_string() + "}");
    const auto start = std::chrono::steady_clock::now();
    EvalReport report;
    report.decoder = opts.decoder;
    long iterations = 0;
    for (const auto& sentence : corpus.sentences) {
        std::vector<int> predicted;
        if (opts.decoder == Decoder::rns) {
            RnsResult r = rns_decode(model, sentence, opts.rns);
            iterations += r.iterations;
            report.max_iterations = std::max(report.max_iterations, r.iterations);
            if (!r.converged) ++report.non_converged;
            for (Eigen::Index l = 0; l < r.table.rows(); ++l) report.confidences.push_back(r.table.row(l).maxCoeff());
            predicted = std::move(r.labels);
        } else {
            predicted = viterbi_decode(model, sentence);
        }
        std::vector<int> truth;
        for (const auto& tok : sentence.tokens) truth.push_back(tok.label);
        const HammingLoss h = hamming(truth, predicted);
        report.sentence_loss.push_back(h.loss);
        report.sentence_counted.push_back(h.counted);
        report.total_loss += h.loss;
        report.total_counted += h.counted;
        report.predictions.push_back(std::move(predicted));
    }
    if (report.total_counted == 0) throw ArgumentError("evaluate: corpus has no labelled tokens");
    report.mean_loss = static_cast<double>(report.total_loss) / static_cast<double>(report.total_counted);
    report.accuracy = 1.0 - report.mean_loss;
    if (opts.decoder == Decoder::rns)
        report.mean_iterations = static_cast<double>(iterations) / static_cast<double>(corpus.sentences.size());
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

double paired_t_value(std::span<const double> differences) {
    const auto n = static_cast<double>(differences.size());
    if (differences.size() < 2) return 0.0;
    double mean = 0.0;
    for (double d : differences) mean += d;
    mean /= n;
    double ss = 0.0;
    for (double d : differences) ss += (d - mean) * (d - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    if (sd == 0.0) return mean == 0.0 ? 0.0 : std::copysign(INFINITY, mean);
    return mean / (sd / std::sqrt(n));
}

DecoderComparison compare_decoders(const TrainedModel& model, const Corpus& corpus, const RnsOptions& rns) {
    DecoderComparison cmp;
    cmp.rns = evaluate(model, corpus, EvalOptions{Decoder::rns, rns});
    cmp.viterbi = evaluate(model, corpus, EvalOptions{Decoder::viterbi, rns});
    for (std::size_t s = 0; s < cmp.rns.sentence_loss.size(); ++s) {
        const int counted = cmp.rns.sentence_counted[s];
        if (counted == 0) continue;
        cmp.differences.push_back(static_cast<double>(cmp.viterbi.sentence_loss[s] - cmp.rns.sentence_loss[s]) /
                                  counted);
    }
    cmp.t_value = paired_t_value(cmp.differences);
    return cmp;
}

SweepTable missing_sweep(const Corpus& train_corpus, const Corpus& test_corpus, const TemplateSet& templates,
                         const std::vector<double>& fractions, const std::vector<DependencySet>& variants,
                         const std::vector<KernelSpec>& kernels, const TrainOptions& train_opts,
                         const EvalOptions& eval_opts, std::uint64_t seed) {
    for (double f : fractions)
        if (!(f >= 0.0 && f <= 1.0)) throw ArgumentError("sweep fractions must lie in [0, 1]");
    SweepTable table;
    table.fractions = fractions;
    table.variants = variants;
    for (double fraction : fractions) {
        // Same mask for every variant of a row.
        const Corpus masked = mask_labels(train_corpus, fraction, seed);
        for (const auto& deps : variants) {
            SweepCell cell;
            cell.fraction = fraction;
            cell.deps = deps;
            try {
                TrainResult trained = train(masked, templates, deps, kernels, train_opts);
                cell.train_seconds = trained.seconds;
                cell.outer_iterations = trained.outer_iterations;
                cell.report = evaluate(trained.model, test_corpus, eval_opts);
            } catch (const NumericalError& e) {
                throw NumericalError(std::string(e.what()) + " [sweep cell fraction=" + std::to_string(fraction) +
                                     " deps={" + deps.to_string() + "}]");
            }
            table.cells.push_back(std::move(cell));
        }
    }
    return table;
}

std::string format_percent(double percent) {
    // printf rounds the exact binary value; exact decimal ties go to even.
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", percent);
    return buf;
}

void write_report_header(std::ostream& out) {
    out << "dataset,decoder,fraction,deps,loss_pct,accuracy,mean_iterations,wall_seconds\n";
}

void write_report_row(std::ostream& out, const std::string& dataset, const EvalReport& report, double fraction,
                      const DependencySet& deps) {
    char acc[32];
    std::snprintf(acc, sizeof acc, "%.4f", report.accuracy);
    char iters[32];
    std::snprintf(iters, sizeof iters, "%.3f", report.mean_iterations);
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.3f", report.seconds);
    char frac[32];
    std::snprintf(frac, sizeof frac, "%g", fraction);
    out << dataset << ',' << to_string(report.decoder) << ',' << frac << ",\"" << deps.to_string() << "\","
        << format_percent(report.loss_percent()) << ',' << acc << ',' << iters << ',' << secs << '\n';
}

void write_sweep_csv(std::ostream& out, const std::string& dataset, const SweepTable& table) {
    write_report_header(out);
    for (const auto& cell : table.cells) write_report_row(out, dataset, cell.report, cell.fraction, cell.deps);
}

} // namespace gpsl
