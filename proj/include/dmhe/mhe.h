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

#ifndef DMHE_MHE_H_
#define DMHE_MHE_H_

#include <deque>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dmhe/horizon_model.h"
#include "dmhe/weights.h"

namespace dmhe {

// One horizon problem: N measurements, N-1 controls (u_k drives x_k -> x_{k+1})
// and the arrival prior for the first state.
struct MheProblem {
  Eigen::VectorXd prior;
  std::vector<Eigen::VectorXd> measurements;
  std::vector<Eigen::VectorXd> controls;
  ThetaParams theta;

  int horizon() const { return static_cast<int>(measurements.size()); }
  void Validate(const HorizonModel& model) const;
};

enum class SolveStatus {
  kConverged,
  kMaxIterations,
  kLineSearchFailed,
  kStalled,  // the step no longer changes the iterate in double precision
};

struct HorizonSolution {
  std::vector<Eigen::VectorXd> states;  // x_{k|N}, N entries
  std::vector<Eigen::VectorXd> noises;  // eta_k, N-1 entries
  std::vector<Eigen::VectorXd> duals;   // lambda_k, N-1 entries (lambda_N = 0)
  double cost = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  SolveStatus status = SolveStatus::kConverged;
  std::vector<double> cost_history;  // cost of every accepted iterate

  bool converged() const { return status == SolveStatus::kConverged; }
  const Eigen::VectorXd& Latest() const { return states.back(); }
};

struct MheOptions {
  double tolerance = 1e-8;   // on the KKT residual (max-norm)
  int max_iterations = 50;
  double armijo = 1e-4;
  int max_line_search = 30;
};

// Damped Gauss-Newton in the shooting variables (x_1, eta_1..eta_{N-1}).
// Each step solves the linearized horizon problem exactly with a backward
// Riccati sweep in information form, which stays accurate when a forgetting
// factor makes the early noise weights vanish; duals come from the backward
// adjoint pass.
class MheSolver {
 public:
  explicit MheSolver(const HorizonModel& model, MheOptions options = {});

  // Throws NonFiniteError if the rollout or residuals blow up.
  HorizonSolution Solve(const MheProblem& problem,
                        const HorizonSolution* warm_start = nullptr) const;

  // Solve from an explicit initial guess of the shooting variables.
  HorizonSolution Solve(const MheProblem& problem, const Eigen::VectorXd& initial_state,
                        const std::vector<Eigen::VectorXd>& initial_noises) const;

  const HorizonModel& model() const { return model_; }
  const MheOptions& options() const { return options_; }

 private:
  const HorizonModel& model_;
  MheOptions options_;
};

// Objective value of a (not necessarily feasible) trajectory.
double MheCost(const HorizonModel& model, const MheProblem& problem,
               const HorizonSolution& solution);

// Max-norm of: stationarity in x_k (k >= 2), in eta_k, the dynamics
// residuals, and the arrival boundary condition.
double KktResidual(const HorizonModel& model, const MheProblem& problem,
                   const HorizonSolution& solution);

// Sliding measurement/control buffer. The window grows from 2 to N samples
// with the prior anchored at the initial guess, then slides one step per
// sample with the prior taken from the previous solution.
class MovingWindow {
 public:
  MovingWindow(int horizon, Eigen::VectorXd initial_prior);

  // First sample (no control precedes it).
  void Start(const Eigen::VectorXd& measurement);

  // Appends y_t and the control u_{t-1} applied since the previous sample.
  // `previous` is the solution of the last problem returned (required once
  // the window is full). Returns the problem for the new window.
  MheProblem Advance(const Eigen::VectorXd& measurement, const Eigen::VectorXd& control,
                     const HorizonSolution* previous, const ThetaParams& theta);

  // Initial guess for the problem last returned by Advance, obtained by
  // shifting `previous` and appending the model prediction.
  std::pair<Eigen::VectorXd, std::vector<Eigen::VectorXd>> WarmStart(
      const HorizonSolution& previous, const HorizonModel& model) const;

  int size() const { return static_cast<int>(measurements_.size()); }
  int horizon() const { return horizon_; }
  bool slid() const { return slid_; }
  const Eigen::VectorXd& prior() const { return prior_; }

 private:
  int horizon_;
  Eigen::VectorXd prior_;
  std::deque<Eigen::VectorXd> measurements_;
  std::deque<Eigen::VectorXd> controls_;
  bool slid_ = false;
};

}  // namespace dmhe

#endif  // DMHE_MHE_H_
