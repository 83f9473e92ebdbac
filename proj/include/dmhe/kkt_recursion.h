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

#ifndef DMHE_KKT_RECURSION_H_
#define DMHE_KKT_RECURSION_H_

#include <vector>

#include <Eigen/Dense>

namespace dmhe {

// Linear two-point boundary system over a horizon of N stages (zero-based):
//
//   X_{k+1}   = A_k X_k + B_k Q_k^-1 B_k^T Lam_k + D_k          k = 0..N-2
//   Lam_{k-1} = A_k^T Lam_k + (G_k - H^T R_k H) X_k + E_k        k = 1..N-1
//   X_0       = F + P^-1 (G_0 - H^T R_0 H) X_0 + P^-1 A_0^T Lam_0
//   Lam_{N-1} = 0
//
// Every right-hand side (D, E, F) and unknown (X, Lam) has the same number of
// columns, so one solve handles all tuning parameters at once. With a single
// column and G = 0 the same system is the Gauss-Newton step of the horizon
// estimator.
struct DiffKktMatrices {
  int horizon = 0;
  std::vector<Eigen::MatrixXd> a;        // N-1
  std::vector<Eigen::MatrixXd> b;        // N-1
  std::vector<Eigen::VectorXd> q_inv;    // N-1, diag of Q_k^-1
  std::vector<Eigen::MatrixXd> g;        // N, curvature d(A_k^T lam_k)/dx_k
  std::vector<Eigen::MatrixXd> info;     // N, H^T R_k H
  Eigen::VectorXd p_inv;                 // diag of P^-1
  std::vector<Eigen::MatrixXd> d;        // N-1
  std::vector<Eigen::MatrixXd> e;        // N; e[0] is not used
  Eigen::MatrixXd f;

  int state_dim() const { return static_cast<int>(p_inv.size()); }
  int cols() const { return static_cast<int>(f.cols()); }

  // G_k - H^T R_k H.
  Eigen::MatrixXd Coupling(int k) const { return g[k] - info[k]; }

  // Throws std::invalid_argument on inconsistent sizes.
  void Validate() const;
};

struct GradientTrajectory {
  std::vector<Eigen::MatrixXd> x;           // X_{k|N}, N entries
  std::vector<Eigen::MatrixXd> lambda;      // Lam_k, N entries, last is zero
  // Recursion intermediates (empty for the direct solve).
  std::vector<Eigen::MatrixXd> x_filtered;  // X_{k|k}
  std::vector<Eigen::MatrixXd> p_bar;       // Pbar_k
  std::vector<Eigen::MatrixXd> c;           // C_k
};

inline constexpr double kMinReciprocalCondition = 1e-12;

// Forward Kalman pass, backward dual pass, forward correction.
// Throws SingularMatrixError / NonFiniteError.
GradientTrajectory KalmanGradient(const DiffKktMatrices& mats);

// Assembles the whole system as one dense linear solve. Reference oracle.
GradientTrajectory DirectKktSolve(const DiffKktMatrices& mats);

// Max-norm of all equation residuals plus |Lam_{N-1}|.
double DiffKktResidual(const DiffKktMatrices& mats, const GradientTrajectory& traj);

}  // namespace dmhe

#endif  // DMHE_KKT_RECURSION_H_
