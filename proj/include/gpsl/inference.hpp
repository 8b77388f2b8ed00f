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

#ifndef GPSL_INFERENCE_HPP
#define GPSL_INFERENCE_HPP

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "gpsl/corpus.hpp"
#include "gpsl/kernel.hpp"
#include "gpsl/model.hpp"

namespace gpsl {

/// Dependent-label marker for an offset that falls outside the sentence.
inline constexpr int kOutOfRange = -2;

/// A training token with the labels its dependency offsets point at.
/// dependents[d] is a label id, kMissingLabel or kOutOfRange.
struct TokenContext {
    int sentence = 0;
    int position = 0;
    int label = kMissingLabel;
    std::vector<int> dependents;

    bool observed() const { return label >= 0; }
};

/// Training components flattened in corpus order (t = 0..NL-1).
struct TrainingData {
    std::vector<FeatureIds> inputs;
    std::vector<TokenContext> contexts;
    int num_labels = 0;

    static TrainingData build(const Corpus& corpus, const DependencySet& deps);
    int size() const { return static_cast<int>(inputs.size()); }
};

struct TraceEntry {
    int outer = 0;
    int inner = 0;
    std::string step;
    double bound = 0.0;
    double seconds = 0.0;
};

struct TrainOptions {
    double inner_tol = 1e-5;
    double outer_tol = 1e-4;
    int max_outer = 20;
    int max_inner = 500;
    bool optimize_hyper = true;
    int hyper_max_steps = 5;
    /// Stopping rule for the mean-parameter ascents.
    double grad_tol = 1e-6;
    int newton_max_iter = 100;
    double lambda_tol = 1e-8;
    int lambda_max_sweeps = 50;
    /// Called after every accepted update.
    std::function<void(const TraceEntry&)> on_trace;
};

/// Outcome of one coordinate update.
struct UpdateResult {
    double before = 0.0;
    double after = 0.0;
    int iterations = 0;
    bool converged = true;
};

/// The variational lower bound with all caches needed to evaluate it and its
/// gradients, plus the coordinate updates that maximize it.
///
/// Cached per label j: K^{-1} m_j, the Cholesky factor of
/// B_j = I + L^{1/2} K L^{1/2} and diag(V_j). Cached per token: the softmax
/// scores s_t(q) and probabilities sigma_t(q).
class LowerBound {
public:
    LowerBound(TrainingData data, DependencySet deps, std::vector<KernelSpec> kernels, VariationalState state);
    ~LowerBound();
    LowerBound(LowerBound&&) noexcept;
    LowerBound& operator=(LowerBound&&) noexcept;

    double value() const;
    double kl_local(int label) const;
    double kl_pair(int dep) const;
    double likelihood() const;

    const TrainingData& data() const;
    const DependencySet& deps() const;
    const VariationalState& state() const;
    const std::vector<KernelSpec>& kernels() const;
    int num_labels() const;
    int size() const;

    void set_state(VariationalState state);
    void set_kernels(std::vector<KernelSpec> kernels);

    /// NL x J softmax probabilities sigma_t(q).
    const Eigen::MatrixXd& softmax() const;
    /// NL x J arguments s_t(q) of the log-sum-exp.
    const Eigen::MatrixXd& scores() const;
    const Eigen::VectorXd& variance_diagonal(int label) const;
    /// Dense V_j, for tests and small problems.
    Eigen::MatrixXd covariance(int label) const;
    const GramMatrix& gram(int label) const;

    Eigen::VectorXd grad_m_U(int label) const;
    Eigen::VectorXd grad_m_S(int dep) const;
    Eigen::VectorXd grad_v_S(int dep) const;
    /// d bound / d log-hyperparameters with m and lambda held fixed,
    /// concatenated over kernels in order.
    std::vector<double> grad_log_params() const;

    UpdateResult update_m_U(int label, const TrainOptions& opts = {});
    UpdateResult fixedpoint_V_U(int label, const TrainOptions& opts = {});
    UpdateResult update_m_S(int dep, const TrainOptions& opts = {});
    UpdateResult update_v_S(int dep, const TrainOptions& opts = {});
    UpdateResult hyper_step(const TrainOptions& opts = {});

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct TrainResult {
    TrainedModel model;
    std::vector<TraceEntry> trace;
    int outer_iterations = 0;
    int inner_iterations = 0;
    double final_bound = 0.0;
    double seconds = 0.0;
};

/// Variational EM: coordinate ascent over the variational parameters in the
/// inner loop, a hyperparameter step in the outer loop.
TrainResult train(const Corpus& corpus, const TemplateSet& templates, const DependencySet& deps,
                  std::vector<KernelSpec> kernels, const TrainOptions& opts = {});

/// Bound of a trained model on (its own) training corpus.
double lower_bound(const TrainedModel& model, const Corpus& corpus);

/// Writes "outer,inner,step,bound,seconds" lines.
void write_trace_csv(std::ostream& out, const std::vector<TraceEntry>& trace);

} // namespace gpsl

#endif
