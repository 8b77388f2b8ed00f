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

#include "gpsl/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include "gpsl/error.hpp"

namespace gpsl {

TrainingData TrainingData::build(const Corpus& corpus, const DependencySet& deps) {
    TrainingData data;
    data.num_labels = corpus.num_labels();
    for (std::size_t n = 0; n < corpus.sentences.size(); ++n) {
        const auto& tokens = corpus.sentences[n].tokens;
        const auto length = static_cast<int>(tokens.size());
        for (int l = 0; l < length; ++l) {
            TokenContext ctx;
            ctx.sentence = static_cast<int>(n);
            ctx.position = l;
            ctx.label = tokens[static_cast<std::size_t>(l)].label;
            for (int offset : deps.offsets()) {
                const int p = l + offset;
                ctx.dependents.push_back(p < 0 || p >= length ? kOutOfRange
                                                               : tokens[static_cast<std::size_t>(p)].label);
            }
            data.inputs.push_back(tokens[static_cast<std::size_t>(l)].features);
            data.contexts.push_back(std::move(ctx));
        }
    }
    return data;
}

namespace {

// Acceptance slack for a coordinate step: rounding noise of the bound itself.
constexpr double kNoise = 1e-14;

struct LabelCache {
    Eigen::VectorXd alpha;
    double quad = 0.0;  // m^T K^{-1} m
    Eigen::VectorXd sqrt_lambda;
    Eigen::LLT<Eigen::MatrixXd> site;
    Eigen::VectorXd diag_v;
    double logdet_site = 0.0;
    double trace_term = 0.0;  // sum_t lambda_t V_tt
};

void log_softmax_row(const Eigen::MatrixXd& S, Eigen::Index t, Eigen::MatrixXd& sigma, Eigen::VectorXd& lse) {
    const double top = S.row(t).maxCoeff();
    double total = 0.0;
    for (Eigen::Index q = 0; q < S.cols(); ++q) {
        const double e = std::exp(S(t, q) - top);
        sigma(t, q) = e;
        total += e;
    }
    sigma.row(t) /= total;
    lse(t) = top + std::log(total);
}

} // namespace

struct LowerBound::Impl {
    TrainingData data;
    DependencySet deps;
    std::vector<KernelSpec> kernels;
    VariationalState state;
    int J = 0;
    int n = 0;
    int R = 0;

    std::vector<GramMatrix> grams;
    std::vector<LabelCache> labels;
    Eigen::MatrixXd pair_term;  // sum over active d of m_S + v_S / 2
    Eigen::MatrixXd S;
    Eigen::MatrixXd sigma;
    Eigen::VectorXd lse;
    Eigen::VectorXd observed;  // 1 for labelled tokens
    Eigen::MatrixXd onehot;    // observed indicator of y_t = q
    // active[d][a]: tokens whose dependency d points at label a
    std::vector<std::vector<std::vector<int>>> active;
    double hyper_rate = 0.1;

    Impl(TrainingData d, DependencySet s, std::vector<KernelSpec> k, VariationalState v)
        : data(std::move(d)), deps(std::move(s)), kernels(std::move(k)), state(std::move(v)) {
        J = data.num_labels;
        n = data.size();
        R = deps.size();
        if (J < 2) throw ArgumentError("need at least 2 labels");
        if (n < 1) throw ArgumentError("need at least one training token");
        if (kernels.size() != 1 && kernels.size() != static_cast<std::size_t>(J))
            throw ArgumentError("need one shared kernel or one per label");
        state.validate(J, n, R);

        observed = Eigen::VectorXd::Zero(n);
        onehot = Eigen::MatrixXd::Zero(n, J);
        active.assign(static_cast<std::size_t>(R), std::vector<std::vector<int>>(static_cast<std::size_t>(J)));
        for (int t = 0; t < n; ++t) {
            const auto& ctx = data.contexts[static_cast<std::size_t>(t)];
            if (static_cast<int>(ctx.dependents.size()) != R)
                throw ArgumentError("token context does not match the dependency set");
            if (ctx.label >= J) throw ArgumentError("token label out of range");
            if (ctx.observed()) {
                observed(t) = 1.0;
                onehot(t, ctx.label) = 1.0;
            }
            for (int d = 0; d < R; ++d) {
                const int a = ctx.dependents[static_cast<std::size_t>(d)];
                if (a >= J) throw ArgumentError("dependent label out of range");
                if (a >= 0) active[static_cast<std::size_t>(d)][static_cast<std::size_t>(a)].push_back(t);
            }
        }
        rebuild_all();
    }

    int group(int j) const { return kernels.size() == 1 ? 0 : j; }
    const GramMatrix& gram_of(int j) const { return grams[static_cast<std::size_t>(group(j))]; }

    void rebuild_all() {
        grams.clear();
        for (const auto& k : kernels) grams.emplace_back(k, data.inputs);
        labels.clear();
        for (int j = 0; j < J; ++j) {
            LabelCache cache = make_site(j, state.lambda_U[static_cast<std::size_t>(j)]);
            set_mean(j, cache);
            labels.push_back(std::move(cache));
        }
        rebuild_pair_term();
        refresh_scores();
    }

    void set_mean(int j, LabelCache& cache) const {
        const auto& m = state.m_U[static_cast<std::size_t>(j)];
        cache.alpha = gram_of(j).solve(m);
        cache.quad = m.dot(cache.alpha);
    }

    // Site factorization and diag(V) for a given lambda; the mean part is untouched.
    LabelCache make_site(int j, const Eigen::VectorXd& lambda) const {
        const Eigen::MatrixXd& K = gram_of(j).matrix();
        LabelCache cache;
        cache.sqrt_lambda = lambda.array().sqrt();
        const auto& s = cache.sqrt_lambda;
        Eigen::MatrixXd B = s.asDiagonal() * K * s.asDiagonal();
        B.diagonal().array() += 1.0;
        cache.site.compute(B);
        if (cache.site.info() != Eigen::Success)
            throw NumericalError("site matrix I + L^1/2 K L^1/2 is not positive definite");
        cache.logdet_site = 2.0 * cache.site.matrixLLT().diagonal().array().log().sum();
        // V = K - C^T C with C = chol(B)^{-1} L^{1/2} K
        Eigen::MatrixXd C = s.asDiagonal() * K;
        cache.site.matrixL().solveInPlace(C);
        cache.diag_v = K.diagonal() - C.colwise().squaredNorm().transpose();
        cache.trace_term = lambda.dot(cache.diag_v);
        return cache;
    }

    void rebuild_pair_term() {
        pair_term = Eigen::MatrixXd::Zero(n, J);
        for (int d = 0; d < R; ++d) {
            const auto& m = state.m_S[static_cast<std::size_t>(d)];
            const auto& v = state.v_S[static_cast<std::size_t>(d)];
            for (int a = 0; a < J; ++a)
                for (int t : active[static_cast<std::size_t>(d)][static_cast<std::size_t>(a)])
                    for (int q = 0; q < J; ++q) pair_term(t, q) += m(a * J + q) + 0.5 * v(a * J + q);
        }
    }

    void refresh_scores() {
        S.resize(n, J);
        for (int j = 0; j < J; ++j)
            S.col(j) = state.m_U[static_cast<std::size_t>(j)] + 0.5 * labels[static_cast<std::size_t>(j)].diag_v +
                       pair_term.col(j);
        sigma.resize(n, J);
        lse.resize(n);
        for (int t = 0; t < n; ++t) log_softmax_row(S, t, sigma, lse);
    }

    void refresh_column(int j) {
        S.col(j) = state.m_U[static_cast<std::size_t>(j)] + 0.5 * labels[static_cast<std::size_t>(j)].diag_v +
                   pair_term.col(j);
        for (int t = 0; t < n; ++t) log_softmax_row(S, t, sigma, lse);
    }

    // Adds delta (J^2, pair-indexed) to the pair scores of tokens where d is active.
    void shift_pairs(int d, const Eigen::VectorXd& delta) {
        for (int a = 0; a < J; ++a) {
            for (int t : active[static_cast<std::size_t>(d)][static_cast<std::size_t>(a)]) {
                for (int q = 0; q < J; ++q) {
                    pair_term(t, q) += delta(a * J + q);
                    S(t, q) += delta(a * J + q);
                }
                log_softmax_row(S, t, sigma, lse);
            }
        }
    }

    double kl_local(int j) const {
        const auto& c = labels[static_cast<std::size_t>(j)];
        return 0.5 * (-c.logdet_site - (static_cast<double>(n) - c.trace_term) - c.quad);
    }

    double kl_pair(int d) const {
        const auto& m = state.m_S[static_cast<std::size_t>(d)];
        const auto& v = state.v_S[static_cast<std::size_t>(d)];
        return 0.5 * ((v.array().log() - v.array()).sum() - m.squaredNorm());
    }

    double likelihood() const {
        double total = 0.0;
        for (int t = 0; t < n; ++t) {
            const auto& ctx = data.contexts[static_cast<std::size_t>(t)];
            if (!ctx.observed()) continue;
            const int y = ctx.label;
            double numerator = state.m_U[static_cast<std::size_t>(y)](t);
            for (int d = 0; d < R; ++d) {
                const int a = ctx.dependents[static_cast<std::size_t>(d)];
                if (a >= 0) numerator += state.m_S[static_cast<std::size_t>(d)](a * J + y);
            }
            total += numerator - lse(t);
        }
        return total;
    }

    double value() const {
        double total = likelihood();
        for (int j = 0; j < J; ++j) total += kl_local(j);
        for (int d = 0; d < R; ++d) total += kl_pair(d);
        return total;
    }

    // Sum over labelled tokens with dependency d active of (onehot - sigma), per pair.
    Eigen::VectorXd pair_residual(int d, bool indicator) const {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(J * J);
        for (int a = 0; a < J; ++a)
            for (int t : active[static_cast<std::size_t>(d)][static_cast<std::size_t>(a)]) {
                if (observed(t) == 0.0) continue;
                for (int q = 0; q < J; ++q)
                    out(a * J + q) += (indicator ? onehot(t, q) : 0.0) - sigma(t, q);
            }
        return out;
    }

    struct Scores {
        Eigen::MatrixXd pair_term, S, sigma;
        Eigen::VectorXd lse;
    };
    Scores save_scores() const { return {pair_term, S, sigma, lse}; }
    void restore_scores(Scores s) {
        pair_term = std::move(s.pair_term);
        S = std::move(s.S);
        sigma = std::move(s.sigma);
        lse = std::move(s.lse);
    }

    bool accept(double after, double before) const { return after >= before - kNoise * std::abs(before); }
};

LowerBound::LowerBound(TrainingData data, DependencySet deps, std::vector<KernelSpec> kernels,
                       VariationalState state)
    : impl_(std::make_unique<Impl>(std::move(data), std::move(deps), std::move(kernels), std::move(state))) {}

LowerBound::~LowerBound() = default;
LowerBound::LowerBound(LowerBound&&) noexcept = default;
LowerBound& LowerBound::operator=(LowerBound&&) noexcept = default;

double LowerBound::value() const { return impl_->value(); }
double LowerBound::kl_local(int label) const { return impl_->kl_local(label); }
double LowerBound::kl_pair(int dep) const { return impl_->kl_pair(dep); }
double LowerBound::likelihood() const { return impl_->likelihood(); }
const TrainingData& LowerBound::data() const { return impl_->data; }
const DependencySet& LowerBound::deps() const { return impl_->deps; }
const VariationalState& LowerBound::state() const { return impl_->state; }
const std::vector<KernelSpec>& LowerBound::kernels() const { return impl_->kernels; }
int LowerBound::num_labels() const { return impl_->J; }
int LowerBound::size() const { return impl_->n; }
const Eigen::MatrixXd& LowerBound::softmax() const { return impl_->sigma; }
const Eigen::MatrixXd& LowerBound::scores() const { return impl_->S; }
const GramMatrix& LowerBound::gram(int label) const { return impl_->gram_of(label); }

const Eigen::VectorXd& LowerBound::variance_diagonal(int label) const {
    return impl_->labels.at(static_cast<std::size_t>(label)).diag_v;
}

void LowerBound::set_state(VariationalState state) {
    state.validate(impl_->J, impl_->n, impl_->R);
    impl_->state = std::move(state);
    impl_->labels.clear();
    for (int j = 0; j < impl_->J; ++j) {
        LabelCache cache = impl_->make_site(j, impl_->state.lambda_U[static_cast<std::size_t>(j)]);
        impl_->set_mean(j, cache);
        impl_->labels.push_back(std::move(cache));
    }
    impl_->rebuild_pair_term();
    impl_->refresh_scores();
}

void LowerBound::set_kernels(std::vector<KernelSpec> kernels) {
    if (kernels.size() != impl_->kernels.size()) throw ArgumentError("kernel count mismatch");
    impl_->kernels = std::move(kernels);
    impl_->rebuild_all();
}

Eigen::MatrixXd LowerBound::covariance(int label) const {
    const auto& c = impl_->labels.at(static_cast<std::size_t>(label));
    const Eigen::MatrixXd& K = impl_->gram_of(label).matrix();
    Eigen::MatrixXd C = c.sqrt_lambda.asDiagonal() * K;
    c.site.matrixL().solveInPlace(C);
    return K - C.transpose() * C;
}

Eigen::VectorXd LowerBound::grad_m_U(int label) const {
    const auto& I = *impl_;
    const auto j = static_cast<Eigen::Index>(label);
    Eigen::VectorXd residual = (I.onehot.col(j) - I.sigma.col(j)).cwiseProduct(I.observed);
    return residual - I.labels.at(static_cast<std::size_t>(label)).alpha;
}

Eigen::VectorXd LowerBound::grad_m_S(int dep) const {
    return impl_->pair_residual(dep, true) - impl_->state.m_S.at(static_cast<std::size_t>(dep));
}

Eigen::VectorXd LowerBound::grad_v_S(int dep) const {
    const auto& v = impl_->state.v_S.at(static_cast<std::size_t>(dep));
    // pair_residual without the indicator is -c
    const Eigen::VectorXd c = -impl_->pair_residual(dep, false);
    return 0.5 * (v.cwiseInverse().array() - 1.0).matrix() - 0.5 * c;
}

std::vector<double> LowerBound::grad_log_params() const {
    const auto& I = *impl_;
    const Eigen::Index n = I.n;
    std::vector<Eigen::MatrixXd> G(I.kernels.size(), Eigen::MatrixXd::Zero(n, n));
    for (int j = 0; j < I.J; ++j) {
        const auto& c = I.labels[static_cast<std::size_t>(j)];
        const Eigen::MatrixXd& K = I.gram_of(j).matrix();
        // A = (K + L^{-1})^{-1} = L^{1/2} B^{-1} L^{1/2};  M = (I + L K)^{-1} = I - A K
        Eigen::MatrixXd A = c.site.solve(Eigen::MatrixXd::Identity(n, n));
        A = c.sqrt_lambda.asDiagonal() * A * c.sqrt_lambda.asDiagonal();
        Eigen::MatrixXd M = -A * K;
        M.diagonal().array() += 1.0;
        // Sensitivity of the bound to diag(V) at fixed lambda; zero at the fixed point.
        Eigen::VectorXd coef = I.state.lambda_U[static_cast<std::size_t>(j)] -
                               I.sigma.col(j).cwiseProduct(I.observed);
        Eigen::MatrixXd Q = M * coef.asDiagonal() * M.transpose();
        auto& g = G[static_cast<std::size_t>(I.group(j))];
        g.noalias() += 0.5 * (c.alpha * c.alpha.transpose());
        g += 0.5 * (Q - A);
    }
    std::vector<double> out;
    for (std::size_t k = 0; k < I.kernels.size(); ++k) {
        for (int p = 0; p < I.kernels[k].num_params(); ++p) {
            const Eigen::MatrixXd dK = kernel_log_param_derivative(I.kernels[k], I.data.inputs, p);
            out.push_back(G[k].cwiseProduct(dK).sum());
        }
    }
    return out;
}

UpdateResult LowerBound::update_m_U(int label, const TrainOptions& opts) {
    auto& I = *impl_;
    const auto j = static_cast<std::size_t>(label);
    const Eigen::MatrixXd& K = I.gram_of(label).matrix();
    UpdateResult res;
    res.before = I.value();
    double current = res.before;
    res.converged = false;

    for (int it = 0; it < opts.newton_max_iter; ++it) {
        auto& cache = I.labels[j];
        const Eigen::VectorXd g = grad_m_U(label);
        if (g.norm() < opts.grad_tol) {
            res.converged = true;
            break;
        }
        // Newton direction (K^{-1} + W)^{-1} g through I + W^{1/2} K W^{1/2}.
        const Eigen::VectorXd sig = I.sigma.col(label);
        const Eigen::VectorXd w = (sig.array() * (1.0 - sig.array())).matrix().cwiseProduct(I.observed);
        const Eigen::VectorXd sw = w.array().sqrt();
        Eigen::MatrixXd Bw = sw.asDiagonal() * K * sw.asDiagonal();
        Bw.diagonal().array() += 1.0;
        Eigen::LLT<Eigen::MatrixXd> llt(Bw);
        if (llt.info() != Eigen::Success) throw NumericalError("Newton system for m_U is not positive definite");
        const Eigen::VectorXd Kg = K * g;
        const Eigen::VectorXd inner = sw.cwiseProduct(llt.solve(sw.cwiseProduct(Kg)));
        const Eigen::VectorXd step = Kg - K * inner;
        const Eigen::VectorXd alpha_step = g - w.cwiseProduct(step);  // K^{-1} step
        const double slope = g.dot(step);
        if (!(slope > 0.0)) break;

        const Eigen::VectorXd m0 = I.state.m_U[j];
        const Eigen::VectorXd a0 = cache.alpha;
        const double q0 = cache.quad;
        double eta = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls, eta *= 0.5) {
            I.state.m_U[j] = m0 + eta * step;
            cache.alpha = a0 + eta * alpha_step;
            cache.quad = I.state.m_U[j].dot(cache.alpha);
            I.refresh_column(label);
            const double trial = I.value();
            if (trial >= current + 1e-4 * eta * slope) {
                accepted = true;
                res.iterations = it + 1;
                const double gain = trial - current;
                current = trial;
                if (gain <= kNoise * std::abs(current)) res.converged = true;
                break;
            }
        }
        if (!accepted) {
            I.state.m_U[j] = m0;
            cache.alpha = a0;
            cache.quad = q0;
            I.refresh_column(label);
            // No ascent step left at this precision: the sub-problem is solved.
            res.converged = true;
            break;
        }
        if (res.converged) break;
    }

    // Re-anchor K^{-1} m exactly; keep the old point if that loses ground.
    {
        auto& cache = I.labels[j];
        const Eigen::VectorXd a_inc = cache.alpha;
        const double q_inc = cache.quad;
        I.set_mean(label, cache);
        if (!I.accept(I.value(), current)) {
            cache.alpha = a_inc;
            cache.quad = q_inc;
        }
    }
    res.after = I.value();
    return res;
}

UpdateResult LowerBound::fixedpoint_V_U(int label, const TrainOptions& opts) {
    auto& I = *impl_;
    const auto j = static_cast<std::size_t>(label);
    UpdateResult res;
    res.before = I.value();
    res.converged = false;
    double current = res.before;

    for (int sweep = 0; sweep < opts.lambda_max_sweeps; ++sweep) {
        const Eigen::VectorXd lambda = I.state.lambda_U[j];
        const Eigen::VectorXd target = I.sigma.col(label).cwiseProduct(I.observed);
        if ((target - lambda).cwiseAbs().maxCoeff() < opts.lambda_tol) {
            res.converged = true;
            break;
        }
        bool accepted = false;
        double omega = 1.0;
        for (int tries = 0; tries < 12 && !accepted; ++tries, omega *= 0.5) {
            const Eigen::VectorXd trial_lambda = lambda + omega * (target - lambda);
            LabelCache trial = I.make_site(label, trial_lambda);
            trial.alpha = I.labels[j].alpha;
            trial.quad = I.labels[j].quad;
            auto saved_scores = I.save_scores();
            LabelCache saved = std::move(I.labels[j]);
            I.labels[j] = std::move(trial);
            I.state.lambda_U[j] = trial_lambda;
            I.refresh_column(label);
            const double value = I.value();
            if (I.accept(value, current)) {
                accepted = true;
                current = value;
            } else {
                I.labels[j] = std::move(saved);
                I.state.lambda_U[j] = lambda;
                I.restore_scores(std::move(saved_scores));
            }
        }
        res.iterations = sweep + 1;
        if (!accepted) break;
    }
    res.after = I.value();
    return res;
}

UpdateResult LowerBound::update_m_S(int dep, const TrainOptions& opts) {
    auto& I = *impl_;
    const auto d = static_cast<std::size_t>(dep);
    const int J = I.J;
    UpdateResult res;
    res.before = I.value();
    res.converged = false;
    double current = res.before;

    for (int it = 0; it < opts.newton_max_iter; ++it) {
        const Eigen::VectorXd g = grad_m_S(dep);
        if (g.norm() < opts.grad_tol) {
            res.converged = true;
            break;
        }
        // The Hessian is block diagonal over the dependent label a.
        Eigen::VectorXd step(J * J);
        for (int a = 0; a < J; ++a) {
            Eigen::MatrixXd H = Eigen::MatrixXd::Identity(J, J);
            for (int t : I.active[d][static_cast<std::size_t>(a)]) {
                if (I.observed(t) == 0.0) continue;
                const Eigen::VectorXd s = I.sigma.row(t).transpose();
                H.diagonal() += s;
                H.noalias() -= s * s.transpose();
            }
            step.segment(a * J, J) = H.llt().solve(g.segment(a * J, J));
        }
        const double slope = g.dot(step);
        if (!(slope > 0.0)) break;

        const Eigen::VectorXd m0 = I.state.m_S[d];
        bool accepted = false;
        double eta = 1.0;
        for (int ls = 0; ls < 40; ++ls, eta *= 0.5) {
            auto saved = I.save_scores();
            I.state.m_S[d] = m0 + eta * step;
            I.shift_pairs(dep, eta * step);
            const double trial = I.value();
            if (trial >= current + 1e-4 * eta * slope) {
                accepted = true;
                res.iterations = it + 1;
                const double gain = trial - current;
                current = trial;
                if (gain <= kNoise * std::abs(current)) res.converged = true;
                break;
            }
            I.state.m_S[d] = m0;
            I.restore_scores(std::move(saved));
        }
        if (!accepted) {
            res.converged = true;
            break;
        }
        if (res.converged) break;
    }
    res.after = I.value();
    return res;
}

UpdateResult LowerBound::update_v_S(int dep, const TrainOptions& opts) {
    auto& I = *impl_;
    const auto d = static_cast<std::size_t>(dep);
    UpdateResult res;
    res.before = I.value();
    res.converged = false;
    double current = res.before;

    for (int it = 0; it < opts.newton_max_iter; ++it) {
        const Eigen::VectorXd v = I.state.v_S[d];
        // Stationarity of (log v - v)/2 - c v/2: v = 1 / (1 + c).
        const Eigen::VectorXd c = -I.pair_residual(dep, false);
        const Eigen::VectorXd target = (1.0 + c.array()).inverse().matrix();
        if ((target - v).cwiseAbs().maxCoeff() < 1e-12) {
            res.converged = true;
            break;
        }
        bool accepted = false;
        double omega = 1.0;
        for (int tries = 0; tries < 12 && !accepted; ++tries, omega *= 0.5) {
            auto saved = I.save_scores();
            const Eigen::VectorXd trial_v = v + omega * (target - v);
            I.state.v_S[d] = trial_v;
            I.shift_pairs(dep, 0.5 * (trial_v - v));
            const double value = I.value();
            if (I.accept(value, current)) {
                accepted = true;
                current = value;
            } else {
                I.state.v_S[d] = v;
                I.restore_scores(std::move(saved));
            }
        }
        res.iterations = it + 1;
        if (!accepted) break;
    }
    // Drop accumulated drift of the incremental pair scores.
    I.rebuild_pair_term();
    I.refresh_scores();
    res.after = I.value();
    return res;
}

UpdateResult LowerBound::hyper_step(const TrainOptions& opts) {
    auto& I = *impl_;
    UpdateResult res;
    res.before = I.value();
    res.after = res.before;
    double current = res.before;

    std::vector<double> params;
    for (const auto& k : I.kernels) {
        const auto p = k.log_params();
        params.insert(params.end(), p.begin(), p.end());
    }
    std::vector<double> grad = grad_log_params();
    auto unpack = [&](const std::vector<double>& flat) {
        std::vector<KernelSpec> out;
        std::size_t offset = 0;
        for (const auto& k : I.kernels) {
            const auto count = static_cast<std::size_t>(k.num_params());
            out.push_back(k.with_log_params(std::span<const double>(flat.data() + offset, count)));
            offset += count;
        }
        return out;
    };

    for (int step = 0; step < opts.hyper_max_steps; ++step) {
        double gmax = 0.0;
        for (double g : grad) gmax = std::max(gmax, std::abs(g));
        if (gmax < 1e-9) {
            res.converged = true;
            break;
        }
        // Never move a log-parameter by more than 1 per step.
        const double eta = std::min(I.hyper_rate, 1.0 / gmax);
        std::vector<double> trial_params(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) trial_params[i] = params[i] + eta * grad[i];

        auto saved_kernels = I.kernels;
        auto saved_grams = std::move(I.grams);
        auto saved_labels = std::move(I.labels);
        auto saved_scores = I.save_scores();
        bool ok = true;
        double value = -std::numeric_limits<double>::infinity();
        try {
            I.kernels = unpack(trial_params);
            I.rebuild_all();
            value = I.value();
            ok = std::isfinite(value) && value > current;
        } catch (const NumericalError&) {
            ok = false;
        }
        ++res.iterations;
        if (ok) {
            const double gain = value - current;
            current = value;
            params = trial_params;
            I.hyper_rate = std::min(eta * 2.0, 10.0);
            if (gain <= opts.inner_tol * std::abs(current)) {
                res.converged = true;
                break;
            }
            grad = grad_log_params();
        } else {
            I.kernels = std::move(saved_kernels);
            I.grams = std::move(saved_grams);
            I.labels = std::move(saved_labels);
            I.restore_scores(std::move(saved_scores));
            I.hyper_rate = eta * 0.25;
            if (I.hyper_rate < 1e-10) break;
        }
    }
    res.after = I.value();
    return res;
}

// ---------------------------------------------------------------------------

TrainResult train(const Corpus& corpus, const TemplateSet& templates, const DependencySet& deps,
                  std::vector<KernelSpec> kernels, const TrainOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    if (corpus.num_labels() < 2) throw ArgumentError("training needs at least 2 labels");
    if (corpus.num_observed() == 0) throw ArgumentError("training corpus has no observed labels");
    if (kernels.empty()) kernels.push_back(KernelSpec::linear());

    TrainingData data = TrainingData::build(corpus, deps);
    TrainResult result;
    result.model.inputs = data.inputs;
    const int J = corpus.num_labels();
    const int R = deps.size();
    VariationalState initial = init_state(J, data.size(), R);
    LowerBound bound(std::move(data), deps, kernels, std::move(initial));

    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };
    int outer = 0;
    int inner = 0;
    auto record = [&](const std::string& step, double value) {
        TraceEntry e{outer, inner, step, value, elapsed()};
        if (opts.on_trace) opts.on_trace(e);
        result.trace.push_back(std::move(e));
    };
    auto checked = [&](const char* step, int index, UpdateResult r) {
        if (!std::isfinite(r.after))
            throw NumericalError(std::string("non-finite bound after ") + step + " (outer " +
                                 std::to_string(outer) + ", inner " + std::to_string(inner) + ")");
        record(std::string(step) + "[" + std::to_string(index) + "]", r.after);
    };

    try {
        record("init", bound.value());
        for (outer = 1; outer <= opts.max_outer; ++outer) {
            const double outer_start = bound.value();
            for (inner = 1; inner <= opts.max_inner; ++inner) {
                ++result.inner_iterations;
                const double sweep_start = bound.value();
                for (int j = 0; j < J; ++j) {
                    checked("m_U", j, bound.update_m_U(j, opts));
                    checked("V_U", j, bound.fixedpoint_V_U(j, opts));
                }
                for (int d = 0; d < R; ++d) {
                    checked("m_S", d, bound.update_m_S(d, opts));
                    checked("v_S", d, bound.update_v_S(d, opts));
                }
                if (bound.value() - sweep_start <= opts.inner_tol * std::abs(sweep_start)) break;
            }
            inner = std::min(inner, opts.max_inner);
            if (opts.optimize_hyper) checked("theta", 0, bound.hyper_step(opts));
            result.outer_iterations = outer;
            if (bound.value() - outer_start <= opts.outer_tol * std::abs(outer_start)) break;
        }
    } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " [training outer iteration " + std::to_string(outer) +
                             ", inner iteration " + std::to_string(inner) + "]");
    }

    result.model.alphabets = corpus.alphabets;
    result.model.templates = templates;
    result.model.kernels = bound.kernels();
    result.model.deps = deps;
    result.model.state = bound.state();
    result.final_bound = bound.value();
    result.seconds = elapsed();
    return result;
}

double lower_bound(const TrainedModel& model, const Corpus& corpus) {
    TrainingData data = TrainingData::build(corpus, model.deps);
    if (data.inputs != model.inputs) throw ArgumentError("corpus does not match the model's training inputs");
    data.num_labels = model.num_labels();
    return LowerBound(std::move(data), model.deps, model.kernels, model.state).value();
}

void write_trace_csv(std::ostream& out, const std::vector<TraceEntry>& trace) {
    out << "outer,inner,step,bound,seconds\n";
    const auto precision = out.precision(17);
    for (const auto& e : trace)
        out << e.outer << ',' << e.inner << ',' << e.step << ',' << e.bound << ',' << e.seconds << '\n';
    out.precision(precision);
}

} // namespace gpsl
