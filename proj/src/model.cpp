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

#include "gpsl/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gpsl/error.hpp"

namespace gpsl {

using nlohmann::json;

DependencySet::DependencySet(std::vector<int> offsets) : offsets_(std::move(offsets)) {
    std::set<int> seen;
    for (int o : offsets_) {
        if (o == 0) throw ArgumentError("dependency offset 0 is not allowed");
        if (!seen.insert(o).second) throw ArgumentError("duplicate dependency offset " + std::to_string(o));
    }
}

DependencySet DependencySet::parse(const std::string& text) {
    std::vector<int> offsets;
    std::stringstream in(text);
    for (std::string item; std::getline(in, item, ',');) {
        const auto first = item.find_first_not_of(" \t");
        if (first == std::string::npos) {
            if (text.find_first_not_of(" \t,") == std::string::npos) continue;
            throw ArgumentError("empty dependency offset in '" + text + "'");
        }
        std::size_t used = 0;
        int value = 0;
        try {
            value = std::stoi(item, &used);
        } catch (const std::logic_error&) {
            throw ArgumentError("bad dependency offset '" + item + "'");
        }
        if (item.find_first_not_of(" \t", used) != std::string::npos)
            throw ArgumentError("bad dependency offset '" + item + "'");
        offsets.push_back(value);
    }
    return DependencySet(std::move(offsets));
}

std::string DependencySet::to_string() const {
    std::string out;
    for (std::size_t i = 0; i < offsets_.size(); ++i) {
        if (i > 0) out += ',';
        out += std::to_string(offsets_[i]);
    }
    return out;
}

int pair_index(int a, int b, int num_labels) {
    if (a < 0 || b < 0 || a >= num_labels || b >= num_labels)
        throw ArgumentError("pair_index: label id out of range");
    return a * num_labels + b;
}

void VariationalState::validate(int num_labels, int num_inputs, int num_deps) const {
    auto check = [](bool ok, const std::string& what) {
        if (!ok) throw FormatError("variational state: " + what);
    };
    const auto J = static_cast<std::size_t>(num_labels);
    const auto R = static_cast<std::size_t>(num_deps);
    check(m_U.size() == J && lambda_U.size() == J, "expected one m_U/lambda_U vector per label");
    check(m_S.size() == R && v_S.size() == R, "expected one m_S/v_S vector per dependency");
    for (std::size_t j = 0; j < J; ++j) {
        check(m_U[j].size() == num_inputs && lambda_U[j].size() == num_inputs, "m_U/lambda_U length != NL");
        check(m_U[j].allFinite(), "m_U has non-finite entries");
        check(lambda_U[j].allFinite() && (lambda_U[j].array() >= 0.0).all(), "lambda_U entries must be finite and >= 0");
    }
    for (std::size_t d = 0; d < R; ++d) {
        check(m_S[d].size() == num_labels * num_labels && v_S[d].size() == num_labels * num_labels,
              "m_S/v_S length != J^2");
        check(m_S[d].allFinite(), "m_S has non-finite entries");
        check(v_S[d].allFinite() && (v_S[d].array() > 0.0).all(), "v_S entries must be finite and > 0");
    }
}

VariationalState init_state(int num_labels, int num_inputs, int num_deps, std::uint64_t) {
    if (num_labels < 2) throw ArgumentError("init_state: need at least 2 labels");
    if (num_inputs < 1) throw ArgumentError("init_state: need at least one input");
    if (num_deps < 0) throw ArgumentError("init_state: negative dependency count");
    VariationalState s;
    const double uniform = 1.0 / num_labels;
    for (int j = 0; j < num_labels; ++j) {
        s.m_U.push_back(Eigen::VectorXd::Zero(num_inputs));
        s.lambda_U.push_back(Eigen::VectorXd::Constant(num_inputs, uniform));
    }
    for (int d = 0; d < num_deps; ++d) {
        s.m_S.push_back(Eigen::VectorXd::Zero(num_labels * num_labels));
        s.v_S.push_back(Eigen::VectorXd::Ones(num_labels * num_labels));
    }
    return s;
}

const KernelSpec& TrainedModel::kernel_for(int label) const {
    if (kernels.size() == 1) return kernels.front();
    return kernels.at(static_cast<std::size_t>(label));
}

void TrainedModel::validate() const {
    if (num_labels() < 2) throw FormatError("model needs at least 2 labels");
    if (inputs.empty()) throw FormatError("model has no training inputs");
    if (kernels.size() != 1 && kernels.size() != static_cast<std::size_t>(num_labels()))
        throw FormatError("model needs one shared kernel or one per label");
    for (const auto& k : kernels) {
        try {
            k.validate();
        } catch (const ArgumentError& e) {
            throw FormatError(std::string("kernel: ") + e.what());
        }
    }
    for (const auto& x : inputs) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i] < 0 || x[i] >= num_features() || (i > 0 && x[i] <= x[i - 1]))
                throw FormatError("training input has invalid feature ids");
        }
    }
    state.validate(num_labels(), num_inputs(), deps.size());
}

const PredictorCache& TrainedModel::predictor() const {
    std::call_once(*slot_.once, [this] {
        auto cache = std::make_unique<PredictorCache>();
        std::vector<std::unique_ptr<GramMatrix>> grams(kernels.size());
        for (int j = 0; j < num_labels(); ++j) {
            const std::size_t g = kernels.size() == 1 ? 0 : static_cast<std::size_t>(j);
            if (!grams[g]) grams[g] = std::make_unique<GramMatrix>(kernels[g], inputs);
            const GramMatrix& gram = *grams[g];
            const auto& lambda = state.lambda_U[static_cast<std::size_t>(j)];

            LabelPredictor lp;
            lp.alpha = gram.solve(state.m_U[static_cast<std::size_t>(j)]);
            lp.sqrt_lambda = lambda.array().sqrt();
            Eigen::MatrixXd B = lp.sqrt_lambda.asDiagonal() * gram.matrix() * lp.sqrt_lambda.asDiagonal();
            B.diagonal().array() += 1.0;
            Eigen::LLT<Eigen::MatrixXd> llt(B);
            if (llt.info() != Eigen::Success) throw NumericalError("predictor: site factorization failed");
            lp.factor = llt.matrixL();
            cache->labels.push_back(std::move(lp));
        }
        slot_.cache = std::move(cache);
    });
    if (!slot_.cache) throw NumericalError("predictor initialization failed");
    return *slot_.cache;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json vectors_to_json(const std::vector<Eigen::VectorXd>& vs) {
    json out = json::array();
    for (const auto& v : vs) out.push_back(std::vector<double>(v.data(), v.data() + v.size()));
    return out;
}

std::vector<Eigen::VectorXd> vectors_from_json(const json& j) {
    std::vector<Eigen::VectorXd> out;
    for (const auto& item : j) {
        const auto values = item.get<std::vector<double>>();
        out.push_back(Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
    }
    return out;
}

} // namespace

void save_model(const TrainedModel& model, std::ostream& out) {
    model.validate();
    json doc;
    doc["format"] = kModelFormat;
    doc["num_labels"] = model.num_labels();
    doc["num_features"] = model.num_features();
    doc["num_inputs"] = model.num_inputs();
    doc["num_dependencies"] = model.deps.size();
    doc["offsets"] = model.deps.offsets();
    json kernels = json::array();
    for (const auto& k : model.kernels)
        kernels.push_back({{"family", to_string(k.family)},
                           {"sigma_f2", k.sigma_f2},
                           {"kappa", k.kappa},
                           {"jitter", k.jitter}});
    doc["kernels"] = kernels;
    doc["templates"] = model.templates.templates();
    doc["labels"] = model.alphabets.labels.names();
    doc["features"] = model.alphabets.features.names();

    std::vector<std::size_t> row_ptr{0};
    std::vector<int> ids;
    for (const auto& x : model.inputs) {
        ids.insert(ids.end(), x.begin(), x.end());
        row_ptr.push_back(ids.size());
    }
    doc["inputs"] = {{"row_ptr", row_ptr}, {"ids", ids}};
    doc["m_U"] = vectors_to_json(model.state.m_U);
    doc["lambda_U"] = vectors_to_json(model.state.lambda_U);
    doc["m_S"] = vectors_to_json(model.state.m_S);
    doc["v_S"] = vectors_to_json(model.state.v_S);
    out << doc.dump() << '\n';
    if (!out) throw IoError("failed to write model");
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
    // Write to a sibling file and rename so a failed save leaves no partial model.
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write model file '" + path.string() + "'");
        save_model(model, out);
        out.close();
        if (!out) throw IoError("failed to write model file '" + path.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move model into place at '" + path.string() + "': " + ec.message());
}

TrainedModel load_model(std::istream& in) {
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(std::string("model file is not valid: ") + e.what());
    }

    try {
        if (!doc.is_object() || !doc.contains("format")) throw FormatError("model file has no format tag");
        const auto format = doc.at("format").get<std::string>();
        if (format != kModelFormat) throw VersionError("unsupported model format '" + format + "'");

        TrainedModel m;
        m.alphabets.labels = Alphabet(doc.at("labels").get<std::vector<std::string>>());
        m.alphabets.features = Alphabet(doc.at("features").get<std::vector<std::string>>());
        m.templates = TemplateSet::from_lines(doc.at("templates").get<std::vector<std::string>>());
        try {
            m.deps = DependencySet(doc.at("offsets").get<std::vector<int>>());
        } catch (const ArgumentError& e) {
            throw FormatError(e.what());
        }
        for (const auto& k : doc.at("kernels")) {
            KernelSpec spec;
            spec.family = kernel_family_from_string(k.at("family").get<std::string>());
            spec.sigma_f2 = k.at("sigma_f2").get<double>();
            spec.kappa = k.at("kappa").get<double>();
            spec.jitter = k.at("jitter").get<double>();
            m.kernels.push_back(spec);
        }

        const auto row_ptr = doc.at("inputs").at("row_ptr").get<std::vector<std::size_t>>();
        const auto ids = doc.at("inputs").at("ids").get<std::vector<int>>();
        if (row_ptr.empty() || row_ptr.front() != 0 || row_ptr.back() != ids.size())
            throw FormatError("inconsistent sparse input matrix");
        for (std::size_t r = 0; r + 1 < row_ptr.size(); ++r) {
            if (row_ptr[r + 1] < row_ptr[r]) throw FormatError("inconsistent sparse input matrix");
            m.inputs.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(row_ptr[r]),
                                  ids.begin() + static_cast<std::ptrdiff_t>(row_ptr[r + 1]));
        }

        m.state.m_U = vectors_from_json(doc.at("m_U"));
        m.state.lambda_U = vectors_from_json(doc.at("lambda_U"));
        m.state.m_S = vectors_from_json(doc.at("m_S"));
        m.state.v_S = vectors_from_json(doc.at("v_S"));

        if (doc.at("num_labels").get<int>() != m.num_labels() ||
            doc.at("num_features").get<int>() != m.num_features() ||
            doc.at("num_inputs").get<int>() != m.num_inputs() ||
            doc.at("num_dependencies").get<int>() != m.deps.size())
            throw FormatError("model header dimensions do not match its contents");
        m.validate();
        return m;
    } catch (const json::exception& e) {
        throw FormatError(std::string("model file is malformed: ") + e.what());
    } catch (const TemplateError& e) {
        throw FormatError(std::string("model file templates: ") + e.what());
    } catch (const ArgumentError& e) {
        throw FormatError(std::string("model file: ") + e.what());
    }
}

TrainedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file '" + path.string() + "'");
    return load_model(in);
}

} // namespace gpsl
