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

#ifndef GPSL_TESTS_ORACLES_HPP
#define GPSL_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gpsl/corpus.hpp"
#include "gpsl/decode.hpp"
#include "gpsl/inference.hpp"
#include "gpsl/kernel.hpp"
#include "gpsl/model.hpp"

// Independent dense implementations used as test oracles. Nothing here calls
// into the library's numerical code; only plain data types are shared.
namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double normal(std::mt19937_64& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

// Random corpus with feature ids in [0, num_features) and labels in [0, J);
// each label is missing with probability `missing`.
inline gpsl::Corpus random_corpus(std::mt19937_64& rng, int sentences, int max_length, int num_labels,
                                  int num_features, double missing = 0.0, bool fixed_length = false) {
    gpsl::Corpus c;
    for (int j = 0; j < num_labels; ++j) c.alphabets.labels.insert("y" + std::to_string(j));
    for (int p = 0; p < num_features; ++p) c.alphabets.features.insert("f" + std::to_string(p));
    for (int s = 0; s < sentences; ++s) {
        gpsl::Sentence sentence;
        const int length = fixed_length ? max_length : uniform_int(rng, 1, max_length);
        for (int l = 0; l < length; ++l) {
            gpsl::Token token;
            for (int p = 0; p < num_features; ++p)
                if (uniform(rng, 0.0, 1.0) < 0.4) token.features.push_back(p);
            token.label = uniform(rng, 0.0, 1.0) < missing ? gpsl::kMissingLabel : uniform_int(rng, 0, num_labels - 1);
            sentence.tokens.push_back(std::move(token));
        }
        c.sentences.push_back(std::move(sentence));
    }
    return c;
}

inline std::vector<std::vector<int>> flat_inputs(const gpsl::Corpus& c) {
    std::vector<std::vector<int>> out;
    for (const auto& s : c.sentences)
        for (const auto& t : s.tokens) out.push_back(t.features);
    return out;
}

inline std::vector<int> flat_labels(const gpsl::Corpus& c) {
    std::vector<int> out;
    for (const auto& s : c.sentences)
        for (const auto& t : s.tokens) out.push_back(t.label);
    return out;
}

// dependents[t][d]: label at position + offset_d, -1 if missing, -2 if outside.
inline std::vector<std::vector<int>> dependents(const gpsl::Corpus& c, const std::vector<int>& offsets) {
    std::vector<std::vector<int>> out;
    for (const auto& s : c.sentences) {
        const int L = static_cast<int>(s.tokens.size());
        for (int l = 0; l < L; ++l) {
            std::vector<int> row;
            for (int o : offsets) {
                const int p = l + o;
                row.push_back(p < 0 || p >= L ? -2 : s.tokens[static_cast<std::size_t>(p)].label);
            }
            out.push_back(row);
        }
    }
    return out;
}

inline double kernel_value(const gpsl::KernelSpec& k, const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<int> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    if (k.family == gpsl::KernelFamily::linear) return k.sigma_f2 * static_cast<double>(both.size());
    const double d2 = static_cast<double>(a.size() + b.size() - 2 * both.size());
    return k.sigma_f2 * std::exp(-0.5 * k.kappa * d2);
}

inline MatrixXd cross(const gpsl::KernelSpec& k, const std::vector<std::vector<int>>& rows,
                      const std::vector<std::vector<int>>& cols) {
    MatrixXd out(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = kernel_value(k, rows[i], cols[j]);
    return out;
}

inline MatrixXd gram(const gpsl::KernelSpec& k, const std::vector<std::vector<int>>& inputs) {
    MatrixXd K = cross(k, inputs, inputs);
    K.diagonal().array() += k.jitter;
    return K;
}

inline double logdet(const MatrixXd& A) { return std::log(A.fullPivLu().determinant()); }

// Log-determinant by cofactor expansion along the first row.
inline double cofactor_det(const MatrixXd& A) {
    const auto n = A.rows();
    if (n == 1) return A(0, 0);
    double total = 0.0;
    for (Eigen::Index c = 0; c < n; ++c) {
        MatrixXd minor(n - 1, n - 1);
        for (Eigen::Index i = 1; i < n; ++i)
            for (Eigen::Index j = 0, jj = 0; j < n; ++j)
                if (j != c) minor(i - 1, jj++) = A(i, j);
        total += (c % 2 == 0 ? 1.0 : -1.0) * A(0, c) * cofactor_det(minor);
    }
    return total;
}

// Everything needed to evaluate the bound densely.
struct Problem {
    int J = 0;
    int n = 0;
    std::vector<int> offsets;
    std::vector<MatrixXd> K;  // one per label
    std::vector<int> labels;
    std::vector<std::vector<int>> deps;
};

inline Problem make_problem(const gpsl::Corpus& c, const std::vector<int>& offsets,
                            const std::vector<gpsl::KernelSpec>& kernels) {
    Problem p;
    p.J = c.num_labels();
    p.offsets = offsets;
    const auto inputs = flat_inputs(c);
    p.n = static_cast<int>(inputs.size());
    for (int j = 0; j < p.J; ++j)
        p.K.push_back(gram(kernels.size() == 1 ? kernels[0] : kernels[static_cast<std::size_t>(j)], inputs));
    p.labels = flat_labels(c);
    p.deps = dependents(c, offsets);
    return p;
}

struct DenseState {
    std::vector<VectorXd> m_U;
    std::vector<MatrixXd> V;
    std::vector<VectorXd> m_S;
    std::vector<VectorXd> v_S;
};

inline MatrixXd site_covariance(const MatrixXd& K, const VectorXd& lambda) {
    MatrixXd A = K.inverse();
    A.diagonal() += lambda;
    return A.inverse();
}

inline DenseState dense_state(const Problem& p, const gpsl::VariationalState& s) {
    DenseState d{s.m_U, {}, s.m_S, s.v_S};
    for (int j = 0; j < p.J; ++j) d.V.push_back(site_covariance(p.K[static_cast<std::size_t>(j)], s.lambda_U[static_cast<std::size_t>(j)]));
    return d;
}

// s_t(q) for every token.
inline MatrixXd scores(const Problem& p, const DenseState& s) {
    MatrixXd S(p.n, p.J);
    for (int t = 0; t < p.n; ++t) {
        for (int q = 0; q < p.J; ++q) {
            double v = s.m_U[static_cast<std::size_t>(q)](t) + 0.5 * s.V[static_cast<std::size_t>(q)](t, t);
            for (std::size_t d = 0; d < p.offsets.size(); ++d) {
                const int a = p.deps[static_cast<std::size_t>(t)][d];
                if (a < 0) continue;
                v += s.m_S[d](a * p.J + q) + 0.5 * s.v_S[d](a * p.J + q);
            }
            S(t, q) = v;
        }
    }
    return S;
}

inline MatrixXd softmax_rows(const MatrixXd& S) {
    MatrixXd out(S.rows(), S.cols());
    for (Eigen::Index t = 0; t < S.rows(); ++t) {
        const double top = S.row(t).maxCoeff();
        const Eigen::RowVectorXd e = (S.row(t).array() - top).exp().matrix();
        out.row(t) = e / e.sum();
    }
    return out;
}

inline double likelihood(const Problem& p, const DenseState& s) {
    const MatrixXd S = scores(p, s);
    double total = 0.0;
    for (int t = 0; t < p.n; ++t) {
        const int y = p.labels[static_cast<std::size_t>(t)];
        if (y < 0) continue;
        double num = s.m_U[static_cast<std::size_t>(y)](t);
        for (std::size_t d = 0; d < p.offsets.size(); ++d) {
            const int a = p.deps[static_cast<std::size_t>(t)][d];
            if (a >= 0) num += s.m_S[d](a * p.J + y);
        }
        const double top = S.row(t).maxCoeff();
        total += num - (top + std::log((S.row(t).array() - top).exp().sum()));
    }
    return total;
}

inline double bound(const Problem& p, const DenseState& s) {
    double total = likelihood(p, s);
    for (int j = 0; j < p.J; ++j) {
        const auto& K = p.K[static_cast<std::size_t>(j)];
        const auto& V = s.V[static_cast<std::size_t>(j)];
        const auto& m = s.m_U[static_cast<std::size_t>(j)];
        const MatrixXd Omega = K.inverse();
        total += 0.5 * (logdet(V) - logdet(K) - (Omega * V).trace() - m.dot(Omega * m));
    }
    for (std::size_t d = 0; d < s.m_S.size(); ++d)
        total += 0.5 * ((s.v_S[d].array().log() - s.v_S[d].array()).sum() - s.m_S[d].squaredNorm());
    return total;
}

inline double central_difference(const std::function<double(double)>& f, double h = 1e-5) {
    return (f(h) - f(-h)) / (2.0 * h);
}

inline double relative_error(const VectorXd& analytic, const VectorXd& numeric) {
    const double scale = std::max({analytic.norm(), numeric.norm(), 1e-6});
    return (analytic - numeric).norm() / scale;
}

// Maximizes the bound over a dense SPD V_j (everything else fixed) by projected
// gradient ascent with backtracking.
inline MatrixXd projected_gradient_V(const Problem& p, DenseState s, int j, int max_iter = 200000) {
    const auto jj = static_cast<std::size_t>(j);
    const MatrixXd Omega = p.K[jj].inverse();
    VectorXd obs = VectorXd::Zero(p.n);
    for (int t = 0; t < p.n; ++t) obs(t) = p.labels[static_cast<std::size_t>(t)] >= 0 ? 1.0 : 0.0;
    auto project = [](const MatrixXd& A) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (A + A.transpose()));
        VectorXd ev = es.eigenvalues().cwiseMax(1e-10);
        return MatrixXd(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
    };
    double eta = 0.1;
    double current = bound(p, s);
    for (int it = 0; it < max_iter; ++it) {
        const MatrixXd sig = softmax_rows(scores(p, s));
        MatrixXd G = 0.5 * (s.V[jj].inverse() - Omega);
        G.diagonal() -= 0.5 * obs.cwiseProduct(sig.col(j));
        const MatrixXd V0 = s.V[jj];
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls) {
            s.V[jj] = project(V0 + eta * G);
            const double trial = bound(p, s);
            const double change = (s.V[jj] - V0).squaredNorm();
            if (std::isfinite(trial) && trial >= current + 1e-4 * G.cwiseProduct(s.V[jj] - V0).sum()) {
                moved = change > 0.0;
                current = trial;
                eta *= 1.5;
                break;
            }
            eta *= 0.5;
        }
        if (!moved || (s.V[jj] - V0).norm() < 1e-14 * (1.0 + V0.norm())) break;
    }
    return s.V[jj];
}

// Joint maximizer of the bound: dense Newton steps over all means (local and
// pair functions together, full cross-label Hessian) alternating with the dense
// stationarity conditions for the covariances. With no dependencies this is a
// variational GP multiclass classifier under the softmax likelihood.
struct JointResult {
    double bound = 0.0;
    DenseState state;
};

inline JointResult joint_optimum(const Problem& p, int max_rounds = 500) {
    const int n = p.n;
    const int J = p.J;
    const int R = static_cast<int>(p.offsets.size());
    const int dim = n * J + R * J * J;
    DenseState s;
    std::vector<MatrixXd> Omega;
    VectorXd obs = VectorXd::Zero(n);
    MatrixXd Y = MatrixXd::Zero(n, J);
    for (int t = 0; t < n; ++t) {
        const int y = p.labels[static_cast<std::size_t>(t)];
        if (y >= 0) {
            obs(t) = 1.0;
            Y(t, y) = 1.0;
        }
    }
    for (int j = 0; j < J; ++j) {
        Omega.push_back(p.K[static_cast<std::size_t>(j)].inverse());
        s.m_U.push_back(VectorXd::Zero(n));
        s.V.push_back(site_covariance(p.K[static_cast<std::size_t>(j)], obs / J));
    }
    for (int d = 0; d < R; ++d) {
        s.m_S.push_back(VectorXd::Zero(J * J));
        s.v_S.push_back(VectorXd::Ones(J * J));
    }
    // Column indices of the variables feeding s_t(q).
    auto columns = [&](int t, int q) {
        std::vector<int> cols{q * n + t};
        for (int d = 0; d < R; ++d) {
            const int a = p.deps[static_cast<std::size_t>(t)][static_cast<std::size_t>(d)];
            if (a >= 0) cols.push_back(n * J + d * J * J + a * J + q);
        }
        return cols;
    };
    auto unpack = [&](const VectorXd& x, DenseState& st) {
        for (int j = 0; j < J; ++j) st.m_U[static_cast<std::size_t>(j)] = x.segment(j * n, n);
        for (int d = 0; d < R; ++d) st.m_S[static_cast<std::size_t>(d)] = x.segment(n * J + d * J * J, J * J);
    };
    auto pack = [&](const DenseState& st) {
        VectorXd x(dim);
        for (int j = 0; j < J; ++j) x.segment(j * n, n) = st.m_U[static_cast<std::size_t>(j)];
        for (int d = 0; d < R; ++d) x.segment(n * J + d * J * J, J * J) = st.m_S[static_cast<std::size_t>(d)];
        return x;
    };

    double current = bound(p, s);
    for (int round = 0; round < max_rounds; ++round) {
        const double round_start = current;
        for (int it = 0; it < 100; ++it) {
            const MatrixXd sig = softmax_rows(scores(p, s));
            const VectorXd x = pack(s);
            VectorXd g = VectorXd::Zero(dim);
            MatrixXd H = MatrixXd::Zero(dim, dim);
            for (int j = 0; j < J; ++j) {
                g.segment(j * n, n) = -Omega[static_cast<std::size_t>(j)] * s.m_U[static_cast<std::size_t>(j)];
                H.block(j * n, j * n, n, n) = Omega[static_cast<std::size_t>(j)];
            }
            for (int k = n * J; k < dim; ++k) {
                g(k) = -x(k);
                H(k, k) = 1.0;
            }
            for (int t = 0; t < n; ++t) {
                if (obs(t) == 0.0) continue;
                for (int a = 0; a < J; ++a) {
                    const auto ca = columns(t, a);
                    for (int c : ca) g(c) += Y(t, a) - sig(t, a);
                    for (int b = 0; b < J; ++b) {
                        const double w = (a == b ? sig(t, a) : 0.0) - sig(t, a) * sig(t, b);
                        for (int c1 : ca)
                            for (int c2 : columns(t, b)) H(c1, c2) += w;
                    }
                }
            }
            if (g.norm() < 1e-12) break;
            const VectorXd step = H.ldlt().solve(g);
            const DenseState base = s;
            double eta = 1.0;
            bool ok = false;
            for (int ls = 0; ls < 50; ++ls, eta *= 0.5) {
                unpack(x + eta * step, s);
                const double trial = bound(p, s);
                if (trial >= current) {
                    current = trial;
                    ok = true;
                    break;
                }
            }
            if (!ok) {
                s = base;
                break;
            }
        }
        // Covariances: V_j^{-1} = Omega_j + diag(obs * sigma_j) and v = 1 / (1 + c),
        // damped until the bound rises.
        for (int it = 0; it < 200; ++it) {
            const MatrixXd sig = softmax_rows(scores(p, s));
            std::vector<VectorXd> c(static_cast<std::size_t>(R), VectorXd::Zero(J * J));
            for (int t = 0; t < n; ++t) {
                if (obs(t) == 0.0) continue;
                for (int d = 0; d < R; ++d) {
                    const int a = p.deps[static_cast<std::size_t>(t)][static_cast<std::size_t>(d)];
                    if (a < 0) continue;
                    for (int q = 0; q < J; ++q) c[static_cast<std::size_t>(d)](a * J + q) += sig(t, q);
                }
            }
            const DenseState base = s;
            double omega = 1.0;
            bool ok = false;
            double diff = 0.0;
            for (int tries = 0; tries < 30; ++tries, omega *= 0.5) {
                diff = 0.0;
                for (int j = 0; j < J; ++j) {
                    const auto jj = static_cast<std::size_t>(j);
                    const MatrixXd target = site_covariance(p.K[jj], obs.cwiseProduct(sig.col(j)));
                    s.V[jj] = base.V[jj] + omega * (target - base.V[jj]);
                    diff = std::max(diff, (target - base.V[jj]).cwiseAbs().maxCoeff());
                }
                for (int d = 0; d < R; ++d) {
                    const auto dd = static_cast<std::size_t>(d);
                    const VectorXd target = (1.0 + c[dd].array()).inverse().matrix();
                    s.v_S[dd] = base.v_S[dd] + omega * (target - base.v_S[dd]);
                    diff = std::max(diff, (target - base.v_S[dd]).cwiseAbs().maxCoeff());
                }
                const double trial = bound(p, s);
                if (trial >= current) {
                    current = trial;
                    ok = true;
                    break;
                }
            }
            if (!ok) {
                s = base;
                break;
            }
            if (diff < 1e-13) break;
        }
        if (current - round_start <= 1e-15 * std::abs(current)) break;
    }
    return {current, s};
}

// Direct Viterbi oracle: best path by enumerating all J^L labelings.
inline std::vector<int> exhaustive_path(const MatrixXd& node, const MatrixXd& edge) {
    const int L = static_cast<int>(node.rows());
    const int J = static_cast<int>(node.cols());
    std::vector<int> path(static_cast<std::size_t>(L), 0), best;
    double best_score = -1e300;
    long total = 1;
    for (int l = 0; l < L; ++l) total *= J;
    for (long code = 0; code < total; ++code) {
        long c = code;
        // Position 0 is the most significant digit so enumeration is lexicographic.
        for (int l = L - 1; l >= 0; --l) {
            path[static_cast<std::size_t>(l)] = static_cast<int>(c % J);
            c /= J;
        }
        double score = 0.0;
        for (int l = 0; l < L; ++l) {
            score += node(l, path[static_cast<std::size_t>(l)]);
            if (l > 0) score += edge(path[static_cast<std::size_t>(l - 1)], path[static_cast<std::size_t>(l)]);
        }
        if (score > best_score) {
            best_score = score;
            best = path;
        }
    }
    return best;
}

inline double path_score(const MatrixXd& node, const MatrixXd& edge, const std::vector<int>& path) {
    double score = 0.0;
    for (std::size_t l = 0; l < path.size(); ++l) {
        score += node(static_cast<Eigen::Index>(l), path[l]);
        if (l > 0) score += edge(path[l - 1], path[l]);
    }
    return score;
}

// Brute-force iteration of the refined normalized score map.
inline MatrixXd rns_map(const MatrixXd& local, const std::vector<int>& offsets, const std::vector<MatrixXd>& g,
                        const MatrixXd& prev) {
    const int L = static_cast<int>(local.rows());
    const int J = static_cast<int>(local.cols());
    MatrixXd S = local;
    for (int l = 0; l < L; ++l)
        for (int j = 0; j < J; ++j)
            for (std::size_t d = 0; d < offsets.size(); ++d) {
                const int p = l + offsets[d];
                if (p < 0 || p >= L) continue;
                for (int a = 0; a < J; ++a) S(l, j) += prev(p, a) * g[d](a, j);
            }
    return softmax_rows(S);
}

inline MatrixXd rns_fixed_point(const MatrixXd& local, const std::vector<int>& offsets,
                                const std::vector<MatrixXd>& g, int max_iter = 100000) {
    MatrixXd cur = softmax_rows(local);
    for (int it = 0; it < max_iter; ++it) {
        MatrixXd next = rns_map(local, offsets, g, cur);
        const double change = (next - cur).cwiseAbs().maxCoeff();
        cur = next;
        if (change < 1e-15) break;
    }
    return cur;
}

inline double golden_section_max(const std::function<double(double)>& f, double lo, double hi, int iters = 200) {
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - r * (b - a), d = a + r * (b - a);
    double fc = f(c), fd = f(d);
    for (int i = 0; i < iters; ++i) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    // Polish on the sign of the central-difference slope.
    const double h = 1e-6 * std::max(1.0, std::abs(b));
    a = std::max(lo, a - 1e-6);
    b = std::min(hi, b + 1e-6);
    for (int i = 0; i < 200 && b - a > 1e-15; ++i) {
        const double m = 0.5 * (a + b);
        if (f(m + h) - f(m - h) > 0.0) a = m;
        else b = m;
    }
    return 0.5 * (a + b);
}

} // namespace oracle

#endif
