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

#ifndef GPSL_KERNEL_HPP
#define GPSL_KERNEL_HPP

#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "gpsl/corpus.hpp"

namespace gpsl {

enum class KernelFamily { linear, squared_exponential };

std::string to_string(KernelFamily family);
KernelFamily kernel_family_from_string(const std::string& name);

/// Covariance family plus hyperparameters. The diagonal jitter is an absolute
/// value and is not part of the optimized hyperparameters.
struct KernelSpec {
    KernelFamily family = KernelFamily::linear;
    double sigma_f2 = 1.0;
    double kappa = 1.0;
    double jitter = 1e-6;

    static KernelSpec linear(double sigma_f2 = 1.0);
    static KernelSpec squared_exponential(double sigma_f2 = 1.0, double kappa = 1.0);

    void validate() const;

    /// Optimized parameters, in log domain: log sigma_f2 [, log kappa].
    int num_params() const { return family == KernelFamily::squared_exponential ? 2 : 1; }
    std::vector<double> log_params() const;
    KernelSpec with_log_params(std::span<const double> params) const;

    bool operator==(const KernelSpec&) const = default;
};

/// Number of ids present in both sorted vectors.
int shared_features(const FeatureIds& a, const FeatureIds& b);

/// Kernel value without jitter.
double kernel_eval(const KernelSpec& spec, const FeatureIds& a, const FeatureIds& b);

/// rows x cols matrix of kernel values, no jitter.
Eigen::MatrixXd cross_kernel(const KernelSpec& spec, std::span<const FeatureIds> rows,
                             std::span<const FeatureIds> cols);

/// dK / d(log param `index`) over the training inputs (jitter excluded).
Eigen::MatrixXd kernel_log_param_derivative(const KernelSpec& spec, std::span<const FeatureIds> inputs,
                                            int index);

/// K over all training components with its Cholesky factor.
class GramMatrix {
public:
    GramMatrix(const KernelSpec& spec, std::span<const FeatureIds> inputs);

    int size() const { return static_cast<int>(K_.rows()); }
    const Eigen::MatrixXd& matrix() const { return K_; }
    const Eigen::LLT<Eigen::MatrixXd>& factor() const { return llt_; }
    double logdet() const { return logdet_; }

    /// K^{-1} b through the Cholesky factor.
    Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
    Eigen::MatrixXd solve(const Eigen::MatrixXd& B) const;
    Eigen::MatrixXd inverse() const;

private:
    Eigen::MatrixXd K_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    double logdet_ = 0.0;
};

} // namespace gpsl

#endif
