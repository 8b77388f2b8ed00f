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

#include "gpsl/kernel.hpp"

#include <cmath>

#include "gpsl/error.hpp"

namespace gpsl {

std::string to_string(KernelFamily family) {
    return family == KernelFamily::linear ? "linear" : "se";
}

KernelFamily kernel_family_from_string(const std::string& name) {
    if (name == "linear") return KernelFamily::linear;
    if (name == "se" || name == "squared_exponential") return KernelFamily::squared_exponential;
    throw ArgumentError("unknown kernel family '" + name + "' (expected linear or se)");
}

KernelSpec KernelSpec::linear(double sigma_f2) {
    return KernelSpec{KernelFamily::linear, sigma_f2, 1.0, 1e-6 * sigma_f2};
}

KernelSpec KernelSpec::squared_exponential(double sigma_f2, double kappa) {
    return KernelSpec{KernelFamily::squared_exponential, sigma_f2, kappa, 1e-6 * sigma_f2};
}

void KernelSpec::validate() const {
    if (!(sigma_f2 > 0.0) || !std::isfinite(sigma_f2)) throw ArgumentError("sigma_f2 must be > 0");
    if (family == KernelFamily::squared_exponential && (!(kappa > 0.0) || !std::isfinite(kappa)))
        throw ArgumentError("kappa must be > 0");
    if (!(jitter >= 0.0) || !std::isfinite(jitter)) throw ArgumentError("jitter must be >= 0");
}

std::vector<double> KernelSpec::log_params() const {
    std::vector<double> p{std::log(sigma_f2)};
    if (family == KernelFamily::squared_exponential) p.push_back(std::log(kappa));
    return p;
}

KernelSpec KernelSpec::with_log_params(std::span<const double> params) const {
    if (static_cast<int>(params.size()) != num_params())
        throw ArgumentError("kernel parameter count mismatch");
    KernelSpec out = *this;
    out.sigma_f2 = std::exp(params[0]);
    if (family == KernelFamily::squared_exponential) out.kappa = std::exp(params[1]);
    return out;
}

int shared_features(const FeatureIds& a, const FeatureIds& b) {
    int count = 0;
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i < *j) {
            ++i;
        } else if (*j < *i) {
            ++j;
        } else {
            ++count;
            ++i;
            ++j;
        }
    }
    return count;
}

namespace {

double squared_distance(const FeatureIds& a, const FeatureIds& b, int shared) {
    return static_cast<double>(a.size() + b.size()) - 2.0 * shared;
}

double evaluate(const KernelSpec& spec, const FeatureIds& a, const FeatureIds& b) {
    const int shared = shared_features(a, b);
    if (spec.family == KernelFamily::linear) return spec.sigma_f2 * shared;
    return spec.sigma_f2 * std::exp(-0.5 * spec.kappa * squared_distance(a, b, shared));
}

} // namespace

double kernel_eval(const KernelSpec& spec, const FeatureIds& a, const FeatureIds& b) {
    return evaluate(spec, a, b);
}

Eigen::MatrixXd cross_kernel(const KernelSpec& spec, std::span<const FeatureIds> rows,
                             std::span<const FeatureIds> cols) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c)
        for (std::size_t r = 0; r < rows.size(); ++r)
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = evaluate(spec, rows[r], cols[c]);
    return out;
}

Eigen::MatrixXd kernel_log_param_derivative(const KernelSpec& spec, std::span<const FeatureIds> inputs,
                                            int index) {
    const auto n = static_cast<Eigen::Index>(inputs.size());
    Eigen::MatrixXd D(n, n);
    for (Eigen::Index s = 0; s < n; ++s) {
        for (Eigen::Index t = 0; t <= s; ++t) {
            const auto& a = inputs[static_cast<std::size_t>(s)];
            const auto& b = inputs[static_cast<std::size_t>(t)];
            const double k = evaluate(spec, a, b);
            double value = k;  // d/dlog sigma_f2
            if (index == 1) {
                if (spec.family != KernelFamily::squared_exponential)
                    throw ArgumentError("kernel parameter index out of range");
                value = k * (-0.5 * spec.kappa * squared_distance(a, b, shared_features(a, b)));
            }
            D(s, t) = value;
            D(t, s) = value;
        }
    }
    return D;
}

GramMatrix::GramMatrix(const KernelSpec& spec, std::span<const FeatureIds> inputs) {
    spec.validate();
    const auto n = static_cast<Eigen::Index>(inputs.size());
    if (n < 1) throw ArgumentError("gram: need at least one input");
    K_.resize(n, n);
    for (Eigen::Index s = 0; s < n; ++s) {
        for (Eigen::Index t = 0; t < s; ++t) {
            const double k = evaluate(spec, inputs[static_cast<std::size_t>(s)], inputs[static_cast<std::size_t>(t)]);
            K_(s, t) = k;
            K_(t, s) = k;
        }
        K_(s, s) = evaluate(spec, inputs[static_cast<std::size_t>(s)], inputs[static_cast<std::size_t>(s)]) +
                   spec.jitter;
    }
    llt_.compute(K_);
    if (llt_.info() != Eigen::Success)
        throw NumericalError("Gram matrix is not positive definite; increase the jitter (currently " +
                             std::to_string(spec.jitter) + ")");
    const auto diag = llt_.matrixLLT().diagonal();
    logdet_ = 2.0 * diag.array().log().sum();
    if (!std::isfinite(logdet_))
        throw NumericalError("Gram matrix factor is singular; increase the jitter");
}

Eigen::VectorXd GramMatrix::solve(const Eigen::VectorXd& b) const {
    if (b.size() != K_.rows()) throw ArgumentError("spd_solve: dimension mismatch");
    return llt_.solve(b);
}

Eigen::MatrixXd GramMatrix::solve(const Eigen::MatrixXd& B) const {
    if (B.rows() != K_.rows()) throw ArgumentError("spd_solve: dimension mismatch");
    return llt_.solve(B);
}

Eigen::MatrixXd GramMatrix::inverse() const {
    return llt_.solve(Eigen::MatrixXd::Identity(K_.rows(), K_.cols()));
}

} // namespace gpsl
