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

#ifndef GPSL_DECODE_HPP
#define GPSL_DECODE_HPP

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gpsl/corpus.hpp"
#include "gpsl/model.hpp"

namespace gpsl {

/// Predictive mean and variance of every local latent function, L x J.
struct PredictiveLocal {
    Eigen::MatrixXd mean;
    Eigen::MatrixXd variance;

    /// mean + variance / 2, the local part of every decoder's score.
    Eigen::MatrixXd scores() const { return mean + 0.5 * variance; }
};

PredictiveLocal predictive_local(const TrainedModel& model, const Sentence& sentence);

/// Expected contribution of dependent label a to target label b under relation d.
double g_term(const TrainedModel& model, int dep, int a, int b);

/// J x J matrix of g_term values for relation d (row = dependent label).
Eigen::MatrixXd g_matrix(const TrainedModel& model, int dep);

struct RnsOptions {
    double tol = 1e-6;
    int max_iter = 100;
    bool keep_snapshots = false;
};

struct RnsResult {
    std::vector<int> labels;
    Eigen::MatrixXd table;  // L x J, rows sum to one
    int iterations = 0;
    bool converged = false;
    std::vector<Eigen::MatrixXd> snapshots;  // table after each iteration, from RNS^0
};

/// Fixed-point iteration of the refined normalized score given local scores
/// (L x J) and one J x J pair-score matrix per dependency offset.
RnsResult rns_iterate(const Eigen::MatrixXd& local_scores, const std::vector<int>& offsets,
                      const std::vector<Eigen::MatrixXd>& pair_scores, const RnsOptions& opts = {});

RnsResult rns_decode(const TrainedModel& model, const Sentence& sentence, const RnsOptions& opts = {});

/// Exact max-sum path for node scores (L x J) and edge scores (J x J, row =
/// previous label). Ties go to the smaller label id.
std::vector<int> viterbi_path(const Eigen::MatrixXd& node_scores, const Eigen::MatrixXd& edge_scores);

/// Requires the model's dependency set to be exactly {-1}.
std::vector<int> viterbi_decode(const TrainedModel& model, const Sentence& sentence);

/// Index of the largest entry, first one on ties.
int argmax_first(const Eigen::Ref<const Eigen::RowVectorXd>& row);

} // namespace gpsl

#endif
