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

#include "dmhe/dmhe_gradient.h"

#include <stdexcept>
#include <string>

#include "dmhe/weights.h"

namespace dmhe {

using Eigen::MatrixXd;
using Eigen::VectorXd;

DiffKktMatrices BuildDiffKkt(const HorizonModel& model, const MheProblem& problem,
                             const HorizonSolution& solution, const GradientOptions& options) {
  problem.Validate(model);
  const int n = problem.horizon();
  if (static_cast<int>(solution.states.size()) != n ||
      static_cast<int>(solution.noises.size()) != n - 1 ||
      static_cast<int>(solution.duals.size()) != n - 1) {
    throw std::invalid_argument("BuildDiffKkt: solution shape does not match the problem");
  }
  if (!(solution.kkt_residual < options.max_kkt_residual)) {
    throw std::invalid_argument("BuildDiffKkt: solution not converged (KKT residual " +
                                std::to_string(solution.kkt_residual) + ")");
  }
  const int nx = model.StateDim();
  const int nt = problem.theta.size();
  const MatrixXd& h = model.OutputMatrix();
  const HorizonWeights w = Expand(problem.theta, n);

  DiffKktMatrices m;
  m.horizon = n;
  m.p_inv = w.p.cwiseInverse();
  m.a.resize(n - 1);
  m.b.resize(n - 1);
  m.q_inv.resize(n - 1);
  m.d.resize(n - 1);
  m.g.resize(n);
  m.info.resize(n);
  m.e.resize(n);

  std::vector<VectorXd> residuals(n);
  for (int k = 0; k < n; ++k) {
    residuals[k] = problem.measurements[k] - model.Output(solution.states[k]);
    m.info[k] = h.transpose() * w.r[k].asDiagonal() * h;
  }
  for (int k = 0; k + 1 < n; ++k) {
    model.Linearize(solution.states[k], problem.controls[k], m.a[k], m.b[k]);
    m.q_inv[k] = w.q[k].cwiseInverse();
    m.g[k] = model.Curvature(solution.states[k], problem.controls[k], solution.duals[k]);
  }
  m.g[n - 1] = MatrixXd::Zero(nx, nx);  // lambda_{N-1} = 0

  for (int k = 0; k < n; ++k) {
    const StagePartials sp = ThetaPartials(problem.theta, n, k);
    // E_k = H^T dR_k/dtheta r_k.
    m.e[k] = h.transpose() * (residuals[k].asDiagonal() * sp.dr);
    if (options.flip_e_sign) m.e[k] = -m.e[k];
    if (k + 1 < n) {
      // D_k = B_k dQ_k^-1/dtheta B_k^T lambda_k, with dQ^-1 = -Q^-2 dQ.
      const VectorXd bt_lambda = m.b[k].transpose() * solution.duals[k];
      const VectorXd scale = -(m.q_inv[k].array().square() * bt_lambda.array()).matrix();
      m.d[k] = m.b[k] * (scale.asDiagonal() * sp.dq);
    }
    if (k == 0) {
      // F = dP^-1/dtheta (H^T R_0 r_0 + A_0^T lambda_0) + P^-1 H^T dR_0/dtheta r_0.
      const VectorXd rhs0 = h.transpose() * w.r[0].cwiseProduct(residuals[0]) +
                            m.a[0].transpose() * solution.duals[0];
      const VectorXd scale = -(m.p_inv.array().square() * rhs0.array()).matrix();
      m.f = scale.asDiagonal() * sp.dp;
      m.f += m.p_inv.asDiagonal() * (h.transpose() * (residuals[0].asDiagonal() * sp.dr));
    }
  }
  m.e[0] = MatrixXd::Zero(nx, nt);
  return m;
}

GradientTrajectory EstimateSensitivity(const HorizonModel& model, const MheProblem& problem,
                                       const HorizonSolution& solution,
                                       const GradientOptions& options) {
  return KalmanGradient(BuildDiffKkt(model, problem, solution, options));
}

}  // namespace dmhe
