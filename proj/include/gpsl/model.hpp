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

#ifndef GPSL_MODEL_HPP
#define GPSL_MODEL_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gpsl/corpus.hpp"
#include "gpsl/kernel.hpp"

namespace gpsl {

inline constexpr std::string_view kModelFormat = "gpsl-model-v1";

/// Signed positional offsets whose labels condition each token's label.
/// {-1} is the previous-label chain; {-1,+1} adds the next label, and so on.
class DependencySet {
public:
    DependencySet() = default;
    explicit DependencySet(std::vector<int> offsets);

    /// Parses "-2,-1,1,2"; the empty string gives the empty set.
    static DependencySet parse(const std::string& text);

    const std::vector<int>& offsets() const { return offsets_; }
    int size() const { return static_cast<int>(offsets_.size()); }
    bool empty() const { return offsets_.empty(); }
    /// True for exactly {-1}.
    bool is_previous_chain() const { return offsets_ == std::vector<int>{-1}; }
    std::string to_string() const;

    bool operator==(const DependencySet&) const = default;

private:
    std::vector<int> offsets_;
};

/// Row-major pair id: dependent label a major, target label b minor.
int pair_index(int a, int b, int num_labels);

/// Variational parameters. V^{Uj} = (K^{-1} + diag(lambda_U[j]))^{-1}; the
/// pair-function posteriors are diagonal with variances v_S[d].
struct VariationalState {
    std::vector<Eigen::VectorXd> m_U;
    std::vector<Eigen::VectorXd> lambda_U;
    std::vector<Eigen::VectorXd> m_S;
    std::vector<Eigen::VectorXd> v_S;

    /// Throws FormatError on inconsistent shapes or out-of-range entries.
    void validate(int num_labels, int num_inputs, int num_deps) const;
};

/// m = 0, lambda = 1/J, v_S = 1. The seed is accepted for interface symmetry
/// and has no effect.
VariationalState init_state(int num_labels, int num_inputs, int num_deps, std::uint64_t seed = 0);

/// Per-label quantities needed to evaluate predictive distributions.
struct LabelPredictor {
    Eigen::VectorXd alpha;        // K^{-1} m
    Eigen::VectorXd sqrt_lambda;  // diag(lambda)^{1/2}
    Eigen::MatrixXd factor;       // lower Cholesky factor of I + L^{1/2} K L^{1/2}
};

struct PredictorCache {
    std::vector<LabelPredictor> labels;
};

class TrainedModel {
public:
    Alphabets alphabets;
    TemplateSet templates;
    /// One shared spec, or one per label.
    std::vector<KernelSpec> kernels;
    DependencySet deps;
    std::vector<FeatureIds> inputs;
    VariationalState state;

    int num_labels() const { return alphabets.labels.size(); }
    int num_features() const { return alphabets.features.size(); }
    int num_inputs() const { return static_cast<int>(inputs.size()); }
    const KernelSpec& kernel_for(int label) const;

    void validate() const;

    /// Factorizations for prediction, built on first use (once, thread-safe).
    /// Call reset_predictor() after mutating a model that was already used.
    const PredictorCache& predictor() const;
    void reset_predictor() { slot_ = PredictorSlot{}; }

private:
    // Copies start with an empty cache.
    struct PredictorSlot {
        PredictorSlot() = default;
        PredictorSlot(const PredictorSlot&) {}
        PredictorSlot& operator=(const PredictorSlot&) {
            cache.reset();
            once = std::make_unique<std::once_flag>();
            return *this;
        }
        std::unique_ptr<std::once_flag> once = std::make_unique<std::once_flag>();
        std::unique_ptr<PredictorCache> cache;
    };
    mutable PredictorSlot slot_;
};

void save_model(const TrainedModel& model, std::ostream& out);
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(std::istream& in);
TrainedModel load_model(const std::filesystem::path& path);

} // namespace gpsl

#endif
