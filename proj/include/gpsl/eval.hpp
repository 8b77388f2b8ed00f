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

#ifndef GPSL_EVAL_HPP
#define GPSL_EVAL_HPP

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gpsl/corpus.hpp"
#include "gpsl/decode.hpp"
#include "gpsl/inference.hpp"
#include "gpsl/model.hpp"

namespace gpsl {

struct HammingLoss {
    int loss = 0;
    int counted = 0;  // positions with a known true label
};

/// Mismatch count; positions whose true label is kMissingLabel are skipped.
HammingLoss hamming(std::span<const int> truth, std::span<const int> predicted);

enum class Decoder { rns, viterbi };
std::string to_string(Decoder decoder);
Decoder decoder_from_string(const std::string& name);

struct EvalOptions {
    Decoder decoder = Decoder::rns;
    RnsOptions rns;
};

struct EvalReport {
    Decoder decoder = Decoder::rns;
    std::vector<int> sentence_loss;
    std::vector<int> sentence_counted;
    std::vector<std::vector<int>> predictions;
    std::vector<double> confidences;  // max RNS per token (rns decoder only)
    long total_loss = 0;
    long total_counted = 0;
    double mean_loss = 0.0;  // fraction of counted tokens
    double accuracy = 0.0;   // 1 - mean_loss
    double mean_iterations = 0.0;
    int max_iterations = 0;
    int non_converged = 0;
    double seconds = 0.0;

    double loss_percent() const { return 100.0 * mean_loss; }
};

EvalReport evaluate(const TrainedModel& model, const Corpus& corpus, const EvalOptions& opts = {});

/// Mean over std-error of paired differences; 0 when all differences vanish.
double paired_t_value(std::span<const double> differences);

struct DecoderComparison {
    EvalReport rns;
    EvalReport viterbi;
    /// Per-sentence loss fraction, viterbi minus rns.
    std::vector<double> differences;
    double t_value = 0.0;
};

DecoderComparison compare_decoders(const TrainedModel& model, const Corpus& corpus, const RnsOptions& rns = {});

struct SweepCell {
    double fraction = 0.0;
    DependencySet deps;
    EvalReport report;
    double train_seconds = 0.0;
    int outer_iterations = 0;
};

/// Row-major over (fraction, dependency variant).
struct SweepTable {
    std::vector<double> fractions;
    std::vector<DependencySet> variants;
    std::vector<SweepCell> cells;

    const SweepCell& at(std::size_t fraction, std::size_t variant) const {
        return cells.at(fraction * variants.size() + variant);
    }
};

/// For every (fraction, variant): mask the training labels, train, and
/// evaluate on the held-out corpus.
SweepTable missing_sweep(const Corpus& train_corpus, const Corpus& test_corpus, const TemplateSet& templates,
                         const std::vector<double>& fractions, const std::vector<DependencySet>& variants,
                         const std::vector<KernelSpec>& kernels, const TrainOptions& train_opts,
                         const EvalOptions& eval_opts, std::uint64_t seed);

/// 2 decimals, ties to even.
std::string format_percent(double percent);

void write_report_header(std::ostream& out);
void write_report_row(std::ostream& out, const std::string& dataset, const EvalReport& report, double fraction,
                      const DependencySet& deps);
void write_sweep_csv(std::ostream& out, const std::string& dataset, const SweepTable& table);

} // namespace gpsl

#endif
