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

#include <cmath>
#include <random>

#include "doctest.h"
#include "gpsl/error.hpp"
#include "gpsl/kernel.hpp"
#include "oracles.hpp"

using namespace gpsl;

namespace {

std::vector<FeatureIds> random_inputs(std::mt19937_64& rng, int n, int features) {
    std::vector<FeatureIds> out;
    for (int i = 0; i < n; ++i) {
        FeatureIds f;
        for (int p = 0; p < features; ++p)
            if (oracle::uniform(rng, 0, 1) < 0.5) f.push_back(p);
        out.push_back(f);
    }
    return out;
}

} // namespace

TEST_CASE("kernel_eval special values") {
    const FeatureIds a{1, 3, 5};
    CHECK(kernel_eval(KernelSpec::squared_exponential(2.5, 0.7), a, a) == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(kernel_eval(KernelSpec::linear(), {1, 2}, {3, 4}) == 0.0);
    CHECK(kernel_eval(KernelSpec::linear(2.0), {1, 2, 7}, {2, 7, 9}) == 4.0);
    // ||a - b||^2 = 1 for a = {1}, b = {}.
    CHECK(kernel_eval(KernelSpec::squared_exponential(1.0, 2.0), {1}, {}) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
}

TEST_CASE("shared_features counts the sorted intersection") {
    CHECK(shared_features({}, {1}) == 0);
    CHECK(shared_features({0, 2, 4, 6}, {1, 2, 3, 6, 9}) == 2);
}

TEST_CASE("Gram matrix of a single empty input is the jitter") {
    const std::vector<FeatureIds> x{{}};
    KernelSpec k = KernelSpec::linear();
    const GramMatrix g(k, x);
    CHECK(g.matrix()(0, 0) == k.jitter);
    k.jitter = 0.0;
    CHECK_THROWS_AS(GramMatrix(k, x), NumericalError);
}

TEST_CASE("Gram matrix with duplicated inputs stays SPD with jitter") {
    const std::vector<FeatureIds> x{{1, 2}, {1, 2}, {1, 2}};
    const GramMatrix g(KernelSpec::linear(), x);
    CHECK(g.factor().info() == Eigen::Success);
    CHECK(std::isfinite(g.logdet()));
}

TEST_CASE("Gram matrix matches a pairwise loop and is exactly symmetric") {
    std::mt19937_64 rng(11);
    const auto x = random_inputs(rng, 5, 6);
    for (const KernelSpec& k : {KernelSpec::linear(1.3), KernelSpec::squared_exponential(0.8, 0.6)}) {
        const GramMatrix g(k, x);
        const Eigen::MatrixXd expected = oracle::gram(k, x);
        CHECK((g.matrix() - expected).cwiseAbs().maxCoeff() < 1e-14);
        CHECK((g.matrix() - g.matrix().transpose()).cwiseAbs().maxCoeff() == 0.0);
        const Eigen::MatrixXd cross = cross_kernel(k, x, x);
        CHECK((cross - oracle::cross(k, x, x)).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("logdet agrees with cofactor expansion up to 8x8") {
    std::mt19937_64 rng(5);
    for (int n = 1; n <= 8; ++n) {
        const auto x = random_inputs(rng, n, 10);
        KernelSpec k = KernelSpec::squared_exponential(1.2, 0.5);
        k.jitter = 0.1;
        const GramMatrix g(k, x);
        const double det = oracle::cofactor_det(g.matrix());
        CHECK(std::abs(g.logdet() - std::log(det)) < 1e-8);
    }
}

TEST_CASE("SE Gram matrices on distinct inputs are positive definite without jitter") {
    std::vector<FeatureIds> x{{}, {0}, {1}, {0, 1}, {2, 5}};
    KernelSpec k = KernelSpec::squared_exponential(1.0, 1.0);
    k.jitter = 0.0;
    const GramMatrix g(k, x);
    CHECK(g.factor().info() == Eigen::Success);
}

TEST_CASE("spd solve") {
    std::mt19937_64 rng(3);
    const auto x = random_inputs(rng, 4, 5);
    KernelSpec k = KernelSpec::squared_exponential(1.0, 0.4);
    k.jitter = 0.05;
    const GramMatrix g(k, x);
    const Eigen::MatrixXd K = g.matrix();
    CHECK((g.solve(K) - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(g.solve(Eigen::MatrixXd(Eigen::MatrixXd::Zero(4, 2))).cwiseAbs().maxCoeff() == 0.0);
    Eigen::VectorXd b(4);
    for (int i = 0; i < 4; ++i) b(i) = oracle::normal(rng);
    CHECK((K * g.solve(b) - b).norm() < 1e-10);
    CHECK((K * g.inverse() - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK_THROWS_AS(g.solve(Eigen::VectorXd(Eigen::VectorXd::Zero(3))), ArgumentError);
}

TEST_CASE("log-parameter derivatives match finite differences") {
    std::mt19937_64 rng(8);
    const auto x = random_inputs(rng, 5, 6);
    for (const KernelSpec& k : {KernelSpec::linear(1.3), KernelSpec::squared_exponential(0.8, 0.6)}) {
        const auto p = k.log_params();
        for (int i = 0; i < k.num_params(); ++i) {
            auto shifted = [&](double h) {
                auto q = p;
                q[static_cast<std::size_t>(i)] += h;
                return cross_kernel(k.with_log_params(q), x, x);
            };
            const Eigen::MatrixXd fd = (shifted(1e-5) - shifted(-1e-5)) / 2e-5;
            const Eigen::MatrixXd an = kernel_log_param_derivative(k, x, i);
            CHECK((fd - an).cwiseAbs().maxCoeff() < 1e-8);
        }
    }
    CHECK_THROWS_AS(kernel_log_param_derivative(KernelSpec::linear(), x, 1), ArgumentError);
}

TEST_CASE("kernel spec validation and names") {
    CHECK(KernelSpec::linear(2.0).jitter == doctest::Approx(2e-6));
    CHECK_THROWS_AS(KernelSpec::linear(-1.0).validate(), ArgumentError);
    CHECK_THROWS_AS(KernelSpec::squared_exponential(1.0, 0.0).validate(), ArgumentError);
    CHECK(kernel_family_from_string(to_string(KernelFamily::squared_exponential)) ==
          KernelFamily::squared_exponential);
    CHECK(kernel_family_from_string("linear") == KernelFamily::linear);
    CHECK_THROWS_AS(kernel_family_from_string("rbf"), ArgumentError);
    const KernelSpec k = KernelSpec::squared_exponential(0.5, 3.0);
    const auto p = k.log_params();
    CHECK(k.with_log_params(p).sigma_f2 == doctest::Approx(0.5));
    CHECK(k.with_log_params(p).kappa == doctest::Approx(3.0));
}
