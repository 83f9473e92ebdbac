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

#include "dmhe/mhe.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "dmhe/errors.h"
#include "dmhe/kkt_recursion.h"

namespace dmhe {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void MheProblem::Validate(const HorizonModel& model) const {
  const int n = horizon();
  if (n < 2) throw std::invalid_argument("MheProblem: need at least 2 measurements");
  if (static_cast<int>(controls.size()) != n - 1) {
    throw std::invalid_argument("MheProblem: expected N-1 controls");
  }
  if (prior.size() != model.StateDim() || !prior.allFinite()) {
    throw std::invalid_argument("MheProblem: prior has wrong size or is not finite");
  }
  for (const VectorXd& y : measurements) {
    if (y.size() != model.OutputDim()) {
      throw std::invalid_argument("MheProblem: measurement size mismatch");
    }
  }
  for (const VectorXd& u : controls) {
    if (u.size() != model.ControlDim()) {
      throw std::invalid_argument("MheProblem: control size mismatch");
    }
  }
  const ThetaLayout& l = theta.layout();
  if (l.state_dim != model.StateDim() || l.output_dim != model.OutputDim() ||
      l.noise_dim != model.NoiseDim()) {
    throw std::invalid_argument("MheProblem: theta layout does not match the model");
  }
}

namespace {

struct Trajectory {
  std::vector<VectorXd> states;
  std::vector<VectorXd> residuals;  // y_k - H x_k
  double cost = 0.0;
};

Trajectory Rollout(const HorizonModel& model, const MheProblem& problem,
                   const HorizonWeights& w, const VectorXd& x0,
                   const std::vector<VectorXd>& noises) {
  const int n = problem.horizon();
  Trajectory t;
  t.states.resize(n);
  t.residuals.resize(n);
  t.states[0] = x0;
  for (int k = 0; k + 1 < n; ++k) {
    t.states[k + 1] = model.Step(t.states[k], problem.controls[k], noises[k]);
    if (!t.states[k + 1].allFinite()) throw NonFiniteError(k + 1, "rollout state");
  }
  const VectorXd dx = x0 - problem.prior;
  double cost = 0.5 * dx.dot(w.p.cwiseProduct(dx));
  for (int k = 0; k < n; ++k) {
    t.residuals[k] = problem.measurements[k] - model.Output(t.states[k]);
    cost += 0.5 * t.residuals[k].dot(w.r[k].cwiseProduct(t.residuals[k]));
  }
  for (int k = 0; k + 1 < n; ++k) cost += 0.5 * noises[k].dot(w.q[k].cwiseProduct(noises[k]));
  if (!std::isfinite(cost)) throw NonFiniteError(n - 1, "cost");
  t.cost = cost;
  return t;
}

struct Adjoint {
  std::vector<MatrixXd> a, b;
  std::vector<VectorXd> duals;
  VectorXd grad_x0;
  std::vector<VectorXd> grad_noise;
  double max_grad = 0.0;
};

// Backward pass: lambda_{N-2} = H^T R_{N-1} r_{N-1},
// lambda_{k-1} = A_k^T lambda_k + H^T R_k r_k.
Adjoint ComputeAdjoint(const HorizonModel& model, const MheProblem& problem,
                       const HorizonWeights& w, const Trajectory& t,
                       const std::vector<VectorXd>& noises) {
  const int n = problem.horizon();
  const MatrixXd& h = model.OutputMatrix();
  Adjoint adj;
  adj.a.resize(n - 1);
  adj.b.resize(n - 1);
  for (int k = 0; k + 1 < n; ++k) {
    model.Linearize(t.states[k], problem.controls[k], adj.a[k], adj.b[k]);
  }
  adj.duals.resize(n - 1);
  adj.duals[n - 2] = h.transpose() * w.r[n - 1].cwiseProduct(t.residuals[n - 1]);
  for (int k = n - 2; k >= 1; --k) {
    adj.duals[k - 1] = adj.a[k].transpose() * adj.duals[k] +
                       h.transpose() * w.r[k].cwiseProduct(t.residuals[k]);
  }
  adj.grad_x0 = w.p.cwiseProduct(t.states[0] - problem.prior) -
                h.transpose() * w.r[0].cwiseProduct(t.residuals[0]) -
                adj.a[0].transpose() * adj.duals[0];
  adj.max_grad = adj.grad_x0.cwiseAbs().maxCoeff();
  adj.grad_noise.resize(n - 1);
  for (int k = 0; k + 1 < n; ++k) {
    adj.grad_noise[k] = w.q[k].cwiseProduct(noises[k]) - adj.b[k].transpose() * adj.duals[k];
    adj.max_grad = std::max(adj.max_grad, adj.grad_noise[k].cwiseAbs().maxCoeff());
  }
  if (!std::isfinite(adj.max_grad)) {
    for (int k = 0; k + 1 < n; ++k) {
      if (!adj.duals[k].allFinite()) throw NonFiniteError(k, "dual");
    }
    throw NonFiniteError(0, "stationarity residual");
  }
  return adj;
}

constexpr int kStallIterations = 5;

struct GaussNewtonStep {
  VectorXd dx0;
  std::vector<VectorXd> dw;
};

// Minimizes the quadratic model of the cost in (dx0, dw) subject to the
// linearized rollout dx_{k+1} = A_k dx_k + B_k dw_k. The value function
// V_k(dx) = 1/2 dx^T S_k dx + s_k^T dx is propagated backward; the only
// inverses are the SPD matrices Q_k + B_k^T S_{k+1} B_k and P + S_0.
GaussNewtonStep SolveGaussNewton(const MatrixXd& h, const HorizonWeights& w,
                                 const MheProblem& problem, const Trajectory& t,
                                 const std::vector<VectorXd>& noises, const Adjoint& adj) {
  const int n = problem.horizon();
  std::vector<MatrixXd> gain(n - 1);
  std::vector<VectorXd> offset(n - 1);
  MatrixXd s_mat = h.transpose() * w.r[n - 1].asDiagonal() * h;
  VectorXd s_vec = -h.transpose() * w.r[n - 1].cwiseProduct(t.residuals[n - 1]);
  for (int k = n - 2; k >= 0; --k) {
    const MatrixXd& a = adj.a[k];
    const MatrixXd& b = adj.b[k];
    const MatrixXd sb = s_mat * b;
    MatrixXd m = b.transpose() * sb;
    m.diagonal() += w.q[k];
    const Eigen::LDLT<MatrixXd> ldlt(m);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > kMinReciprocalCondition)) {
      throw SingularMatrixError(k, "Q + B^T S B", ldlt.rcond());
    }
    const MatrixXd bt_sa = sb.transpose() * a;
    gain[k] = -ldlt.solve(bt_sa);
    offset[k] = -ldlt.solve(w.q[k].cwiseProduct(noises[k]) + b.transpose() * s_vec);
    s_vec = -h.transpose() * w.r[k].cwiseProduct(t.residuals[k]) +
            a.transpose() * (s_vec + sb * offset[k]);
    MatrixXd next = a.transpose() * s_mat * a + bt_sa.transpose() * gain[k];
    next += h.transpose() * w.r[k].asDiagonal() * h;
    s_mat = 0.5 * (next + next.transpose());
  }
  MatrixXd top = s_mat;
  top.diagonal() += w.p;
  const Eigen::LDLT<MatrixXd> ldlt(top);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > kMinReciprocalCondition)) {
    throw SingularMatrixError(0, "P + S_0", ldlt.rcond());
  }
  GaussNewtonStep step;
  step.dx0 = -ldlt.solve(w.p.cwiseProduct(t.states[0] - problem.prior) + s_vec);
  step.dw.resize(n - 1);
  VectorXd dx = step.dx0;
  for (int k = 0; k + 1 < n; ++k) {
    step.dw[k] = offset[k] + gain[k] * dx;
    dx = adj.a[k] * dx + adj.b[k] * step.dw[k];
  }
  return step;
}

}  // namespace

MheSolver::MheSolver(const HorizonModel& model, MheOptions options)
    : model_(model), options_(options) {}

HorizonSolution MheSolver::Solve(const MheProblem& problem,
                                 const HorizonSolution* warm_start) const {
  const int n = problem.horizon();
  if (warm_start != nullptr && static_cast<int>(warm_start->states.size()) == n &&
      static_cast<int>(warm_start->noises.size()) == n - 1) {
    return Solve(problem, warm_start->states[0], warm_start->noises);
  }
  return Solve(problem, problem.prior,
               std::vector<VectorXd>(std::max(n - 1, 0), VectorXd::Zero(model_.NoiseDim())));
}

HorizonSolution MheSolver::Solve(const MheProblem& problem, const VectorXd& initial_state,
                                 const std::vector<VectorXd>& initial_noises) const {
  problem.Validate(model_);
  const int n = problem.horizon();
  const MatrixXd& h = model_.OutputMatrix();
  if (static_cast<int>(initial_noises.size()) != n - 1) {
    throw std::invalid_argument("MheSolver: initial noise count mismatch");
  }
  const HorizonWeights w = Expand(problem.theta, n);

  VectorXd x0 = initial_state;
  std::vector<VectorXd> noises = initial_noises;
  Trajectory traj = Rollout(model_, problem, w, x0, noises);
  Adjoint adj = ComputeAdjoint(model_, problem, w, traj, noises);

  HorizonSolution sol;
  sol.status = SolveStatus::kMaxIterations;
  sol.cost_history.push_back(traj.cost);
  // Best iterate by KKT residual, returned if the solve does not converge.
  std::vector<VectorXd> best_noises = noises;
  Trajectory best_traj = traj;
  Adjoint best_adj = adj;
  int best_iter = 0;
  int iter = 0;
  for (; iter < options_.max_iterations; ++iter) {
    if (adj.max_grad < options_.tolerance) {
      sol.status = SolveStatus::kConverged;
      break;
    }
    const GaussNewtonStep gn = SolveGaussNewton(h, w, problem, traj, noises, adj);
    const VectorXd& dx0 = gn.dx0;
    const std::vector<VectorXd>& dw = gn.dw;
    double slope = adj.grad_x0.dot(dx0);
    for (int k = 0; k + 1 < n; ++k) slope += adj.grad_noise[k].dot(dw[k]);
    // Stalled: the model predicts a decrease below the rounding of J and the
    // residual has stopped improving.
    if (-slope <= std::numeric_limits<double>::epsilon() * (1.0 + traj.cost) &&
        iter - best_iter >= kStallIterations) {
      sol.status = SolveStatus::kStalled;
      break;
    }

    bool accepted = false;
    double alpha = 1.0;
    const double slack = 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + traj.cost);
    for (int ls = 0; ls <= options_.max_line_search; ++ls, alpha *= 0.5) {
      VectorXd x0_trial = x0 + alpha * dx0;
      std::vector<VectorXd> w_trial(n - 1);
      for (int k = 0; k + 1 < n; ++k) w_trial[k] = noises[k] + alpha * dw[k];
      Trajectory trial = Rollout(model_, problem, w, x0_trial, w_trial);
      if (trial.cost <= traj.cost + options_.armijo * alpha * std::min(slope, 0.0) + slack) {
        x0 = std::move(x0_trial);
        noises = std::move(w_trial);
        traj = std::move(trial);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      sol.status = SolveStatus::kLineSearchFailed;
      break;
    }
    sol.cost_history.push_back(traj.cost);
    adj = ComputeAdjoint(model_, problem, w, traj, noises);
    if (adj.max_grad < best_adj.max_grad) {
      best_noises = noises;
      best_traj = traj;
      best_adj = adj;
      best_iter = iter + 1;
    }
  }
  if (adj.max_grad < options_.tolerance) {
    sol.status = SolveStatus::kConverged;
  } else if (best_adj.max_grad < adj.max_grad) {
    noises = std::move(best_noises);
    traj = std::move(best_traj);
    adj = std::move(best_adj);
  }

  sol.iterations = iter;
  sol.states = std::move(traj.states);
  sol.noises = std::move(noises);
  sol.duals = std::move(adj.duals);
  sol.cost = traj.cost;
  sol.kkt_residual = adj.max_grad;  // dynamics hold exactly by construction
  return sol;
}

double MheCost(const HorizonModel& model, const MheProblem& problem,
               const HorizonSolution& s) {
  const int n = problem.horizon();
  const HorizonWeights w = Expand(problem.theta, n);
  const VectorXd dx = s.states[0] - problem.prior;
  double cost = 0.5 * dx.dot(w.p.cwiseProduct(dx));
  for (int k = 0; k < n; ++k) {
    const VectorXd r = problem.measurements[k] - model.Output(s.states[k]);
    cost += 0.5 * r.dot(w.r[k].cwiseProduct(r));
  }
  for (int k = 0; k + 1 < n; ++k) cost += 0.5 * s.noises[k].dot(w.q[k].cwiseProduct(s.noises[k]));
  return cost;
}

double KktResidual(const HorizonModel& model, const MheProblem& problem,
                   const HorizonSolution& s) {
  problem.Validate(model);
  const int n = problem.horizon();
  if (static_cast<int>(s.states.size()) != n || static_cast<int>(s.noises.size()) != n - 1 ||
      static_cast<int>(s.duals.size()) != n - 1) {
    throw std::invalid_argument("KktResidual: solution shape does not match the problem");
  }
  const HorizonWeights w = Expand(problem.theta, n);
  const MatrixXd& h = model.OutputMatrix();
  const int nx = model.StateDim();
  auto dual = [&](int k) -> VectorXd {
    return (k < n - 1) ? s.duals[k] : VectorXd::Zero(nx);
  };

  double worst = 0.0;
  std::vector<MatrixXd> a(n - 1), b(n - 1);
  for (int k = 0; k + 1 < n; ++k) {
    model.Linearize(s.states[k], problem.controls[k], a[k], b[k]);
    const VectorXd dyn =
        s.states[k + 1] - model.Step(s.states[k], problem.controls[k], s.noises[k]);
    worst = std::max(worst, dyn.cwiseAbs().maxCoeff());
    const VectorXd stat_w = w.q[k].cwiseProduct(s.noises[k]) - b[k].transpose() * s.duals[k];
    worst = std::max(worst, stat_w.cwiseAbs().maxCoeff());
  }
  for (int k = 1; k < n; ++k) {
    const VectorXd r = problem.measurements[k] - model.Output(s.states[k]);
    VectorXd stat_x = -h.transpose() * w.r[k].cwiseProduct(r) + s.duals[k - 1];
    if (k + 1 < n) stat_x -= a[k].transpose() * dual(k);
    worst = std::max(worst, stat_x.cwiseAbs().maxCoeff());
  }
  const VectorXd r0 = problem.measurements[0] - model.Output(s.states[0]);
  const VectorXd boundary = w.p.cwiseProduct(s.states[0] - problem.prior) -
                            h.transpose() * w.r[0].cwiseProduct(r0) -
                            a[0].transpose() * s.duals[0];
  worst = std::max(worst, boundary.cwiseAbs().maxCoeff());
  return worst;
}

MovingWindow::MovingWindow(int horizon, VectorXd initial_prior)
    : horizon_(horizon), prior_(std::move(initial_prior)) {
  if (horizon < 2) throw std::invalid_argument("MovingWindow: horizon must be >= 2");
}

void MovingWindow::Start(const VectorXd& measurement) {
  measurements_.clear();
  controls_.clear();
  measurements_.push_back(measurement);
  slid_ = false;
}

MheProblem MovingWindow::Advance(const VectorXd& measurement, const VectorXd& control,
                                 const HorizonSolution* previous, const ThetaParams& theta) {
  if (measurements_.empty()) throw std::logic_error("MovingWindow: Start() not called");
  measurements_.push_back(measurement);
  controls_.push_back(control);
  slid_ = false;
  if (static_cast<int>(measurements_.size()) > horizon_) {
    if (previous == nullptr || previous->states.size() < 2) {
      throw std::invalid_argument("MovingWindow: previous solution required to slide");
    }
    measurements_.pop_front();
    controls_.pop_front();
    prior_ = previous->states[1];
    slid_ = true;
  }
  MheProblem p;
  p.prior = prior_;
  p.measurements.assign(measurements_.begin(), measurements_.end());
  p.controls.assign(controls_.begin(), controls_.end());
  p.theta = theta;
  return p;
}

std::pair<VectorXd, std::vector<VectorXd>> MovingWindow::WarmStart(
    const HorizonSolution& previous, const HorizonModel& model) const {
  const int n = size();
  VectorXd x0;
  std::vector<VectorXd> noises;
  if (slid_) {
    x0 = previous.states.at(1);
    noises.assign(previous.noises.begin() + 1, previous.noises.end());
  } else {
    x0 = previous.states.at(0);
    noises = previous.noises;
  }
  noises.resize(std::max(n - 1, 0), VectorXd::Zero(model.NoiseDim()));
  return {x0, noises};
}

}  // namespace dmhe
