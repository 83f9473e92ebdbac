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

#ifndef DMHE_VERIFICATION_H_
#define DMHE_VERIFICATION_H_

#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "dmhe/config.h"
#include "dmhe/horizon_model.h"
#include "dmhe/mhe.h"

namespace dmhe {

// ---------------------------------------------------------------------------
// Loss gradient through the solver: dL/dtheta from the sensitivity engine
// against central differences of (horizon solve -> tracking loss), on a
// window captured from a closed-loop episode.

struct GradientCheckReport {
  int snapshot_step = 0;
  int horizon = 0;
  double snapshot_kkt_residual = 0.0;
  Eigen::RowVectorXd analytic;
  Eigen::RowVectorXd finite_difference;
  Eigen::RowVectorXd relative_error;  // |a - fd| / max(|fd|, floor)
  double floor = 0.0;
  double max_relative_error = 0.0;
  int worst_component = -1;
  double tolerance = 0.0;
  bool passed = false;
  std::string error;  // set when the check could not run
  double seconds = 0.0;

  nlohmann::json ToJson() const;
};

// Uses config.scenario, config.gradcheck and config.learning (loss weights).
GradientCheckReport CheckLossGradient(const HarnessConfig& config);

// ---------------------------------------------------------------------------
// Recursion against the dense direct solve on random converged fixtures.

struct OracleReport {
  int instances = 0;
  int horizon = 0;
  double max_abs_difference = 0.0;   // over X and Lambda
  double max_residual_recursion = 0.0;
  double max_residual_direct = 0.0;
  int worst_instance = -1;
  double tolerance = 0.0;
  double residual_tolerance = 0.0;
  std::vector<std::string> errors;  // instances that could not be evaluated
  bool passed = false;
  double seconds = 0.0;

  nlohmann::json ToJson() const;
};

// Random quadrotor horizon problem: a state near hover, controls around the
// hover input, noisy measurements and a perturbed prior.
MheProblem RandomHorizonProblem(std::mt19937_64& rng, const QuadrotorModel& model, int horizon,
                                const ThetaParams& theta, double noise_sigma = 1e-2);

// Random tuning vector: p in [1, 10], r and q in [10, 100], gammas in [0.5, 0.99].
ThetaParams RandomTheta(std::mt19937_64& rng);

OracleReport CheckOracleEquivalence(const HarnessConfig& config, int workers = 1);

// ---------------------------------------------------------------------------
// Timing of the sensitivity engine (differentiated KKT assembly plus the
// recursion) per control step over one closed-loop episode per horizon.

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

// Least-squares line through (x, y). Requires at least two distinct x.
LinearFit FitLine(const std::vector<double>& x, const std::vector<double>& y);

struct BenchRow {
  int horizon = 0;
  int samples = 0;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double solve_mean_ms = 0.0;
  double reference_ms = 0.0;
  double limit_ms = 0.0;
  bool within_envelope = false;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  LinearFit fit;
  bool monotonic = false;
  bool passed = false;  // envelope and linearity
  std::string error;

  nlohmann::json ToJson() const;
  std::string Csv() const;
};

BenchReport RunBenchmark(const HarnessConfig& config);

}  // namespace dmhe

#endif  // DMHE_VERIFICATION_H_
