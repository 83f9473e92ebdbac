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

#include "dmhe/kkt_recursion.h"

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "dmhe/errors.h"

namespace dmhe {

using Eigen::MatrixXd;

void DiffKktMatrices::Validate() const {
  const int n = horizon;
  const int nx = state_dim();
  const int nc = cols();
  if (n < 2) throw std::invalid_argument("DiffKktMatrices: horizon must be >= 2");
  auto check = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("DiffKktMatrices: bad ") + what);
  };
  check(static_cast<int>(a.size()) == n - 1, "a count");
  check(static_cast<int>(b.size()) == n - 1, "b count");
  check(static_cast<int>(q_inv.size()) == n - 1, "q_inv count");
  check(static_cast<int>(d.size()) == n - 1, "d count");
  check(static_cast<int>(g.size()) == n, "g count");
  check(static_cast<int>(info.size()) == n, "info count");
  check(static_cast<int>(e.size()) == n, "e count");
  check(f.rows() == nx, "f rows");
  for (int k = 0; k + 1 < n; ++k) {
    check(a[k].rows() == nx && a[k].cols() == nx, "a shape");
    check(b[k].rows() == nx && b[k].cols() == q_inv[k].size(), "b shape");
    check(d[k].rows() == nx && d[k].cols() == nc, "d shape");
  }
  for (int k = 0; k < n; ++k) {
    check(g[k].rows() == nx && g[k].cols() == nx, "g shape");
    check(info[k].rows() == nx && info[k].cols() == nx, "info shape");
    check(k == 0 || (e[k].rows() == nx && e[k].cols() == nc), "e shape");
  }
}

namespace {

// C = (I - Pbar M)^-1 Pbar with a conditioning check. With s the rows and
// columns where M is nonzero and c the rest, I - Pbar M is block lower
// triangular, so
//   C[s, :] = (I - Pbar_ss M_ss)^-1 Pbar[s, :],
//   C[c, :] = Pbar[c, :] + Pbar_cs M_ss C[s, :].
// States that M never touches (the disturbance random walks) can then carry
// an almost unbounded prior variance without entering the inverse.
MatrixXd GainMatrix(const MatrixXd& p_bar, const MatrixXd& coupling, int stage) {
  const int nx = static_cast<int>(p_bar.rows());
  std::vector<int> s, c;
  for (int i = 0; i < nx; ++i) {
    (coupling.row(i).any() || coupling.col(i).any() ? s : c).push_back(i);
  }
  if (s.empty()) return p_bar;
  const int ns = static_cast<int>(s.size());
  const MatrixXd m_ss = coupling(s, s);
  const MatrixXd lhs = MatrixXd::Identity(ns, ns) - p_bar(s, s) * m_ss;
  Eigen::PartialPivLU<MatrixXd> lu(lhs);
  const double rcond = lu.rcond();
  if (!(rcond > kMinReciprocalCondition)) {
    throw SingularMatrixError(stage, "I - Pbar (G - H^T R H)", rcond);
  }
  MatrixXd gain(nx, nx);
  const MatrixXd c_s = lu.solve(p_bar(s, Eigen::all));
  gain(s, Eigen::all) = c_s;
  if (!c.empty()) gain(c, Eigen::all) = p_bar(c, Eigen::all) + p_bar(c, s) * (m_ss * c_s);
  return gain;
}

MatrixXd NoiseInfo(const DiffKktMatrices& m, int k) {
  return m.b[k] * m.q_inv[k].asDiagonal() * m.b[k].transpose();
}

}  // namespace

GradientTrajectory KalmanGradient(const DiffKktMatrices& m) {
  m.Validate();
  const int n = m.horizon;
  const int nx = m.state_dim();
  const int nc = m.cols();

  GradientTrajectory t;
  t.x.resize(n);
  t.lambda.resize(n);
  t.x_filtered.resize(n);
  t.p_bar.resize(n);
  t.c.resize(n);
  std::vector<MatrixXd> coupling(n);
  for (int k = 0; k < n; ++k) coupling[k] = m.Coupling(k);

  // Initial condition: Pbar_0 = P^-1, X_{0|0} = (I + C_0 M_0) F.
  t.p_bar[0] = m.p_inv.asDiagonal();
  t.c[0] = GainMatrix(t.p_bar[0], coupling[0], 0);
  t.x_filtered[0] = m.f + t.c[0] * (coupling[0] * m.f);

  // Forward Kalman pass.
  for (int k = 1; k < n; ++k) {
    const MatrixXd& a = m.a[k - 1];
    const MatrixXd x_pred = a * t.x_filtered[k - 1] + m.d[k - 1];
    t.p_bar[k] = a * t.c[k - 1] * a.transpose() + NoiseInfo(m, k - 1);
    t.c[k] = GainMatrix(t.p_bar[k], coupling[k], k);
    t.x_filtered[k] = x_pred + t.c[k] * (coupling[k] * x_pred + m.e[k]);
  }

  // Backward dual pass.
  t.lambda[n - 1] = MatrixXd::Zero(nx, nc);
  for (int k = n - 1; k >= 1; --k) {
    MatrixXd at_lambda;
    if (k == n - 1) {
      at_lambda = MatrixXd::Zero(nx, nc);
    } else {
      at_lambda = m.a[k].transpose() * t.lambda[k];
    }
    t.lambda[k - 1] = at_lambda + coupling[k] * (t.c[k] * at_lambda) + m.e[k] +
                      coupling[k] * t.x_filtered[k];
  }

  // Forward correction.
  for (int k = 0; k < n; ++k) {
    if (k == n - 1) {
      t.x[k] = t.x_filtered[k];
    } else {
      t.x[k] = t.x_filtered[k] + t.c[k] * (m.a[k].transpose() * t.lambda[k]);
    }
    if (!t.x[k].allFinite()) throw NonFiniteError(k, "state sensitivity");
    if (!t.lambda[k].allFinite()) throw NonFiniteError(k, "dual sensitivity");
  }
  return t;
}

GradientTrajectory DirectKktSolve(const DiffKktMatrices& m) {
  m.Validate();
  const int n = m.horizon;
  const int nx = m.state_dim();
  const int nc = m.cols();
  const int dim = nx * (2 * n - 1);
  auto xi = [&](int k) { return k * nx; };            // X_k block
  auto li = [&](int k) { return (n + k) * nx; };      // Lam_k block, k < N-1

  MatrixXd lhs = MatrixXd::Zero(dim, dim);
  MatrixXd rhs = MatrixXd::Zero(dim, nc);
  const MatrixXd eye = MatrixXd::Identity(nx, nx);
  const MatrixXd p_inv = m.p_inv.asDiagonal();
  int row = 0;

  // Boundary at the first stage.
  lhs.block(row, xi(0), nx, nx) = eye - p_inv * m.Coupling(0);
  lhs.block(row, li(0), nx, nx) = -p_inv * m.a[0].transpose();
  rhs.middleRows(row, nx) = m.f;
  row += nx;

  // Dynamics.
  for (int k = 0; k + 1 < n; ++k) {
    lhs.block(row, xi(k + 1), nx, nx) = eye;
    lhs.block(row, xi(k), nx, nx) = -m.a[k];
    lhs.block(row, li(k), nx, nx) = -NoiseInfo(m, k);
    rhs.middleRows(row, nx) = m.d[k];
    row += nx;
  }

  // Stationarity in X_k, k >= 1.
  for (int k = 1; k < n; ++k) {
    lhs.block(row, li(k - 1), nx, nx) = eye;
    if (k + 1 < n) lhs.block(row, li(k), nx, nx) = -m.a[k].transpose();
    lhs.block(row, xi(k), nx, nx) = -m.Coupling(k);
    rhs.middleRows(row, nx) = m.e[k];
    row += nx;
  }

  Eigen::FullPivLU<MatrixXd> lu(lhs);
  if (!lu.isInvertible()) throw SingularMatrixError(-1, "assembled KKT matrix", 0.0);
  const MatrixXd sol = lu.solve(rhs);

  GradientTrajectory t;
  t.x.resize(n);
  t.lambda.resize(n);
  for (int k = 0; k < n; ++k) {
    t.x[k] = sol.middleRows(xi(k), nx);
    t.lambda[k] = (k + 1 < n) ? MatrixXd(sol.middleRows(li(k), nx)) : MatrixXd::Zero(nx, nc);
    if (!t.x[k].allFinite() || !t.lambda[k].allFinite()) {
      throw NonFiniteError(k, "direct solution");
    }
  }
  return t;
}

double DiffKktResidual(const DiffKktMatrices& m, const GradientTrajectory& t) {
  m.Validate();
  const int n = m.horizon;
  if (static_cast<int>(t.x.size()) != n || static_cast<int>(t.lambda.size()) != n) {
    throw std::invalid_argument("DiffKktResidual: trajectory length mismatch");
  }
  double worst = t.lambda[n - 1].cwiseAbs().maxCoeff();
  const MatrixXd p_inv = m.p_inv.asDiagonal();

  const MatrixXd boundary = t.x[0] - m.f - p_inv * (m.Coupling(0) * t.x[0]) -
                            p_inv * (m.a[0].transpose() * t.lambda[0]);
  worst = std::max(worst, boundary.cwiseAbs().maxCoeff());
  for (int k = 0; k + 1 < n; ++k) {
    const MatrixXd dyn =
        t.x[k + 1] - m.a[k] * t.x[k] - NoiseInfo(m, k) * t.lambda[k] - m.d[k];
    worst = std::max(worst, dyn.cwiseAbs().maxCoeff());
  }
  for (int k = 1; k < n; ++k) {
    MatrixXd stat = t.lambda[k - 1] - m.Coupling(k) * t.x[k] - m.e[k];
    if (k + 1 < n) stat -= m.a[k].transpose() * t.lambda[k];
    worst = std::max(worst, stat.cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace dmhe
