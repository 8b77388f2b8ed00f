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

#include "gpsl/decode.hpp"

#include <atomic>
#include <cmath>
#include <iostream>

#include "gpsl/error.hpp"
#include "gpsl/kernel.hpp"

namespace gpsl {

namespace {

constexpr double kVarianceTolerance = 1e-8;

void softmax_rows(Eigen::MatrixXd& m) {
    for (Eigen::Index l = 0; l < m.rows(); ++l) {
        const double top = m.row(l).maxCoeff();
        m.row(l) = (m.row(l).array() - top).exp();
        m.row(l) /= m.row(l).sum();
    }
}

} // namespace

int argmax_first(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
    int best = 0;
    for (Eigen::Index j = 1; j < row.size(); ++j)
        if (row(j) > row(best)) best = static_cast<int>(j);
    return best;
}

PredictiveLocal predictive_local(const TrainedModel& model, const Sentence& sentence) {
    const int J = model.num_labels();
    const auto L = static_cast<Eigen::Index>(sentence.size());
    std::vector<FeatureIds> xs;
    for (const auto& tok : sentence.tokens) {
        for (int f : tok.features)
            if (f < 0 || f >= model.num_features())
                throw ArgumentError("sentence feature id outside the model's feature alphabet");
        xs.push_back(tok.features);
    }

    const PredictorCache& cache = model.predictor();
    PredictiveLocal out;
    out.mean.resize(L, J);
    out.variance.resize(L, J);

    Eigen::MatrixXd Ks;
    Eigen::VectorXd kss(L);
    int cached_group = -1;
    for (int j = 0; j < J; ++j) {
        const int group = model.kernels.size() == 1 ? 0 : j;
        if (group != cached_group) {
            const KernelSpec& spec = model.kernel_for(j);
            Ks = cross_kernel(spec, model.inputs, xs);
            for (Eigen::Index l = 0; l < L; ++l) kss(l) = kernel_eval(spec, xs[static_cast<std::size_t>(l)],
                                                                     xs[static_cast<std::size_t>(l)]);
            cached_group = group;
        }
        const LabelPredictor& lp = cache.labels[static_cast<std::size_t>(j)];
        out.mean.col(j) = Ks.transpose() * lp.alpha;
        // K** - K*^T (K + L^{-1})^{-1} K*, with (K + L^{-1})^{-1} = L^{1/2} B^{-1} L^{1/2}
        Eigen::MatrixXd C = lp.sqrt_lambda.asDiagonal() * Ks;
        lp.factor.triangularView<Eigen::Lower>().solveInPlace(C);
        out.variance.col(j) = kss - C.colwise().squaredNorm().transpose();
    }

    static std::atomic<bool> warned{false};
    for (Eigen::Index l = 0; l < L; ++l)
        for (int j = 0; j < J; ++j) {
            double& v = out.variance(l, j);
            if (v < 0.0) {
                if (v < -kVarianceTolerance && !warned.exchange(true))
                    std::clog << "gpsl: warning: negative predictive variance " << v << " clamped to 0\n";
                v = 0.0;
            }
        }
    return out;
}

double g_term(const TrainedModel& model, int dep, int a, int b) {
    if (dep < 0 || dep >= model.deps.size()) throw ArgumentError("g_term: dependency index out of range");
    const int k = pair_index(a, b, model.num_labels());
    const auto d = static_cast<std::size_t>(dep);
    return model.state.m_S[d](k) + 0.5 * model.state.v_S[d](k);
}

Eigen::MatrixXd g_matrix(const TrainedModel& model, int dep) {
    const int J = model.num_labels();
    Eigen::MatrixXd g(J, J);
    for (int a = 0; a < J; ++a)
        for (int b = 0; b < J; ++b) g(a, b) = g_term(model, dep, a, b);
    return g;
}

RnsResult rns_iterate(const Eigen::MatrixXd& local_scores, const std::vector<int>& offsets,
                      const std::vector<Eigen::MatrixXd>& pair_scores, const RnsOptions& opts) {
    if (!(opts.tol > 0.0)) throw ArgumentError("rns: tolerance must be > 0");
    if (opts.max_iter < 1) throw ArgumentError("rns: max_iter must be >= 1");
    if (offsets.size() != pair_scores.size()) throw ArgumentError("rns: one pair-score matrix per offset");
    const Eigen::Index L = local_scores.rows();
    const Eigen::Index J = local_scores.cols();
    for (const auto& g : pair_scores)
        if (g.rows() != J || g.cols() != J) throw ArgumentError("rns: pair-score matrix must be J x J");

    RnsResult res;
    Eigen::MatrixXd prev = local_scores;
    softmax_rows(prev);
    if (opts.keep_snapshots) res.snapshots.push_back(prev);

    Eigen::MatrixXd next(L, J);
    for (int t = 1; t <= opts.max_iter; ++t) {
        // Jacobi sweep: every position reads only the previous table.
        next = local_scores;
        for (std::size_t d = 0; d < offsets.size(); ++d) {
            for (Eigen::Index l = 0; l < L; ++l) {
                const Eigen::Index p = l + offsets[d];
                if (p < 0 || p >= L) continue;
                next.row(l) += prev.row(p) * pair_scores[d];
            }
        }
        softmax_rows(next);
        const double change = (next - prev).cwiseAbs().maxCoeff();
        prev.swap(next);
        res.iterations = t;
        if (opts.keep_snapshots) res.snapshots.push_back(prev);
        if (change < opts.tol) {
            res.converged = true;
            break;
        }
    }
    res.table = std::move(prev);
    res.labels.resize(static_cast<std::size_t>(L));
    for (Eigen::Index l = 0; l < L; ++l) res.labels[static_cast<std::size_t>(l)] = argmax_first(res.table.row(l));
    return res;
}

RnsResult rns_decode(const TrainedModel& model, const Sentence& sentence, const RnsOptions& opts) {
    const PredictiveLocal local = predictive_local(model, sentence);
    std::vector<Eigen::MatrixXd> pairs;
    for (int d = 0; d < model.deps.size(); ++d) pairs.push_back(g_matrix(model, d));
    return rns_iterate(local.scores(), model.deps.offsets(), pairs, opts);
}

std::vector<int> viterbi_path(const Eigen::MatrixXd& node_scores, const Eigen::MatrixXd& edge_scores) {
    const Eigen::Index L = node_scores.rows();
    const Eigen::Index J = node_scores.cols();
    if (edge_scores.rows() != J || edge_scores.cols() != J) throw ArgumentError("viterbi: edge matrix must be J x J");
    if (L == 0) return {};

    Eigen::MatrixXd best(L, J);
    Eigen::MatrixXi back(L, J);
    best.row(0) = node_scores.row(0);
    for (Eigen::Index l = 1; l < L; ++l) {
        for (Eigen::Index b = 0; b < J; ++b) {
            Eigen::Index arg = 0;
            double top = best(l - 1, 0) + edge_scores(0, b);
            for (Eigen::Index a = 1; a < J; ++a) {
                const double v = best(l - 1, a) + edge_scores(a, b);
                if (v > top) {
                    top = v;
                    arg = a;
                }
            }
            best(l, b) = top + node_scores(l, b);
            back(l, b) = static_cast<int>(arg);
        }
    }
    std::vector<int> path(static_cast<std::size_t>(L));
    path.back() = argmax_first(best.row(L - 1));
    for (Eigen::Index l = L - 1; l > 0; --l)
        path[static_cast<std::size_t>(l - 1)] = back(l, path[static_cast<std::size_t>(l)]);
    return path;
}

std::vector<int> viterbi_decode(const TrainedModel& model, const Sentence& sentence) {
    if (!model.deps.is_previous_chain())
        throw UnsupportedDependencyError("viterbi decoding needs the dependency set {-1}, model has {" +
                                         model.deps.to_string() + "}");
    const PredictiveLocal local = predictive_local(model, sentence);
    return viterbi_path(local.scores(), g_matrix(model, 0));
}

} // namespace gpsl
