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

#ifndef GPSL_CLI_HPP
#define GPSL_CLI_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gpsl {

/// Flag values for one invocation; the optional config file uses the same
/// key names as the long flags.
struct RunConfig {
    std::string subcommand;
    std::string data;
    std::string test;
    std::string templ;
    std::string model;
    std::string pred;
    std::string out;
    std::string trace;
    std::string deps = "-1";
    std::string kernel = "linear";
    double sigma_f2 = 1.0;
    double kappa = 1.0;
    std::optional<double> jitter;
    double inner_tol = 1e-5;
    double outer_tol = 1e-4;
    int max_outer = 20;
    bool no_hyper = false;
    double rns_tol = 1e-6;
    int rns_max_iter = 100;
    std::string decoder = "rns";
    double mask_fraction = 0.0;
    std::uint64_t seed = 0;
    bool confidence = false;
    std::string dataset = "data";
    std::string sweep_fractions;
    std::string sweep_deps = "-1;-1,1;-2,-1,1,2";
    int labels = 3;
    int length = 10;
    int count = 100;
    double strength = 3.0;
    int emission_dim = 12;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitNumerical = 1;
inline constexpr int kExitUsage = 2;

int cmd_train(const RunConfig& cfg, std::ostream& out);
int cmd_predict(const RunConfig& cfg, std::ostream& out);
int cmd_eval(const RunConfig& cfg, std::ostream& out);
int cmd_synth(const RunConfig& cfg, std::ostream& out);

/// Parses argv, dispatches, and maps errors to exit codes.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace gpsl

#endif
