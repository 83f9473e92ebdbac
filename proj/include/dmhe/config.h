// Copyright 2026 The DMHE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DMHE_CONFIG_H_
#define DMHE_CONFIG_H_

#include <array>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dmhe/control.h"
#include "dmhe/dmhe_gradient.h"
#include "dmhe/learning.h"
#include "dmhe/mhe.h"
#include "dmhe/rigid_body.h"
#include "dmhe/scenarios.h"
#include "dmhe/weights.h"

namespace dmhe {

// Invalid or incomplete configuration. The message names the offending key.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr int kConfigSchemaVersion = 1;

// Named closed-loop scenarios.
//   composite: lemniscate under ground effect plus square and sine wrenches
//   nominal:   lemniscate without disturbance
//   payload:   hover carrying a payload that is released mid-flight
//   downwash:  hover under a downward airflow from a vehicle above
struct ScenarioConfig {
  std::string name = "composite";
  LemniscateConfig lemniscate;
  Takeoff hover;
  double composite_duration = 15.71;
  double nominal_duration = 15.71;
  double payload_duration = 26.0;
  double payload_weight = 5.87;
  double payload_release_time = 20.5;
  bool payload_ground_effect = true;
  double downwash_duration = 20.0;
  double downwash_magnitude = 4.0;
  double downwash_onset = 8.0;
  double downwash_fluctuation = 0.5;
  bool downwash_ground_effect = true;

  static const std::vector<std::string>& Names();
  double Duration() const;
  std::unique_ptr<ReferenceTrajectory> Reference() const;
  DisturbanceProfile Disturbance() const;
};

struct ThetaConfig {
  double p = 5.0;
  double gamma1 = 0.4;
  double r = 50.0;
  double gamma2 = 0.8;
  double q = 50.0;
  std::string file;  // JSON theta written by `train`; overrides the values above

  ThetaParams Build() const;
};

struct PolicyTrainingConfig {
  double learning_rate = 1e-4;
  double adam_epsilon = 1e-8;
  int hidden = 50;
  std::uint64_t seed = 1;
  std::array<double, 2> kp_bounds = {1.0, 8.0};
  std::array<double, 2> kv_bounds = {1.0, 6.0};
  std::array<double, 2> p_bounds = {1.0, 100.0};
  std::array<double, 2> rq_bounds = {5.0, 500.0};
  std::array<double, 2> gamma_bounds = {0.2, 0.99};
};

struct LearningConfig {
  std::string mode = "theta";  // "theta" (per-step descent) or "policy" (networks)
  ChainRule chain_rule = ChainRule::kDirect;
  double kappa_position = 300.0;
  double kappa_velocity = 30.0;
  double beta = 0.0;
  LearningRates rates;
  double gamma_min = kDefaultGammaMin;
  std::string mask = "all";  // "all" or "force_estimation"
  int episodes = 20;
  double convergence_tolerance = 1e-3;
  double max_kkt_residual = 1e-6;
  std::vector<std::array<double, 2>> initial_conditions = {{0.4, 0.8}};
  int trace_stride = 10;  // steps between rows of the per-step training trace
  PolicyTrainingConfig policy;

  LossConfig Loss() const;
  std::vector<int> Mask(const ThetaLayout& layout) const;
};

struct GradcheckConfig {
  int horizon = 5;
  int instances = 100;
  int snapshot_step = 300;
  double solver_tolerance = 1e-10;
  double fd_relative_step = 1e-3;
  double gradient_tolerance = 1e-3;
  double oracle_tolerance = 1e-8;
  double residual_tolerance = 1e-8;
  bool flip_e_sign = false;  // mutation hook: the check must then fail
};

struct BenchConfig {
  std::vector<int> horizons = {10, 20, 30, 40, 50};
  std::vector<double> reference_ms = {3.0, 5.6, 8.7, 11.9, 13.1};
  double envelope_factor = 2.0;
  double duration = 15.71;
  double min_r_squared = 0.95;
};

struct HarnessConfig {
  std::uint64_t seed = 1;
  SimConfig sim;
  bool attitude_feedforward = true;
  QuadrotorParams quadrotor;
  ControlGains gains;
  ControlOptions control;
  MheOptions mhe;
  ThetaConfig theta;
  ScenarioConfig scenario;
  LearningConfig learning;
  GradcheckConfig gradcheck;
  BenchConfig bench;

  // Closed-loop setup for the selected scenario (duration and seed filled in).
  ClosedLoopSetup Setup() const;
  TrainingConfig Training() const;
  PolicyConfig Policy(const ThetaLayout& layout) const;
  // Throws ConfigError.
  void Validate() const;
};

nlohmann::json ConfigToJson(const HarnessConfig& config);

// Every key must be present and no unknown key is accepted; errors name the
// full key path. Relative theta.file paths are kept as written. Does not run
// Validate.
HarnessConfig ConfigFromJson(const nlohmann::json& j);

// Parse and validate. Syntax errors report line and column. LoadConfig
// resolves theta.file relative to the config file's directory.
HarnessConfig ParseConfig(const std::string& text);
HarnessConfig LoadConfig(const std::string& path);

// Resolves a relative theta.file against `base_dir`.
void ResolvePaths(HarnessConfig& config, const std::string& base_dir);

}  // namespace dmhe

#endif  // DMHE_CONFIG_H_
