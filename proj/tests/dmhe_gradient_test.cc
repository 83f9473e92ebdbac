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

#include <random>

#include <gtest/gtest.h>

#include "test_util.h"

namespace dmhe {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

ThetaParams DefaultTheta() {
  return ThetaParams::Uniform(ThetaLayout{}, 5.0, 0.6, 50.0, 0.8, 50.0);
}

// d x_{k|N} / d theta by central differences through the solver.
std::vector<MatrixXd> SolverDifferences(const HorizonModel& model, const MheProblem& prob,
                                        double rel_step) {
  MheOptions opts;
  opts.tolerance = 1e-10;
  MheSolver solver(model, opts);
  const int n = prob.horizon();
  const int nt = prob.theta.size();
  std::vector<MatrixXd> out(n, MatrixXd(model.StateDim(), nt));
  for (int j = 0; j < nt; ++j) {
    const double h = rel_step * std::abs(prob.theta.values()(j));
    MheProblem plus = prob, minus = prob;
    plus.theta.mutable_values()(j) += h;
    minus.theta.mutable_values()(j) -= h;
    const HorizonSolution sp = solver.Solve(plus);
    const HorizonSolution sm = solver.Solve(minus);
    EXPECT_TRUE(sp.converged() && sm.converged());
    for (int k = 0; k < n; ++k) out[k].col(j) = (sp.states[k] - sm.states[k]) / (2.0 * h);
  }
  return out;
}

TEST(DmheGradientTest, ScalarFixtureMatchesSolverDifferences) {
  LinearModel model = LinearModel::ScalarRandomWalk(0.1);
  const ThetaParams theta(ThetaLayout{1, 1, 1},
                          (VectorXd(5) << 2.0, 0.7, 4.0, 0.9, 3.0).finished());
  MheProblem prob;
  prob.theta = theta;
  prob.prior = VectorXd::Constant(1, 0.3);
  std::mt19937_64 rng(51);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int k = 0; k < 6; ++k) prob.measurements.push_back(VectorXd::Constant(1, n(rng)));
  prob.controls.assign(5, VectorXd(0));
  MheOptions opts;
  opts.tolerance = 1e-10;
  const HorizonSolution sol = MheSolver(model, opts).Solve(prob);
  const DiffKktMatrices m = BuildDiffKkt(model, prob, sol);
  const GradientTrajectory direct = DirectKktSolve(m);
  const GradientTrajectory rec = KalmanGradient(m);
  const std::vector<MatrixXd> fd = SolverDifferences(model, prob, 1e-5);
  for (int k = 0; k < 6; ++k) {
    EXPECT_LT(testing::MaxRelativeError(direct.x[k], fd[k], 1e-6), 1e-4) << "k = " << k;
    EXPECT_LT((rec.x[k] - direct.x[k]).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(DmheGradientTest, QuadrotorSensitivityMatchesSolverDifferences) {
  QuadrotorModel model(QuadrotorParams{}, 0.01);
  std::mt19937_64 rng(52);
  const MheProblem prob = testing::MakeQuadrotorProblem(rng, model, 5, 1e-2, DefaultTheta());
  MheOptions opts;
  opts.tolerance = 1e-10;
  const HorizonSolution sol = MheSolver(model, opts).Solve(prob);
  ASSERT_TRUE(sol.converged());
  const GradientTrajectory t = EstimateSensitivity(model, prob, sol);
  const std::vector<MatrixXd> fd = SolverDifferences(model, prob, 1e-5);
  for (int k = 0; k < 5; ++k) {
    const double scale = fd[k].cwiseAbs().maxCoeff();
    EXPECT_LT((t.x[k] - fd[k]).cwiseAbs().maxCoeff(), 1e-5 * scale) << "k = " << k;
  }
}

TEST(DmheGradientTest, RightHandSidesMatchFiniteDifferences) {
  QuadrotorModel model(QuadrotorParams{}, 0.01);
  std::mt19937_64 rng(53);
  const MheProblem prob = testing::MakeQuadrotorProblem(rng, model, 6, 1e-2, DefaultTheta());
  const HorizonSolution sol = MheSolver(model).Solve(prob);
  ASSERT_TRUE(sol.converged());
  const DiffKktMatrices m = BuildDiffKkt(model, prob, sol);
  const MatrixXd& h = model.OutputMatrix();
  const int n = prob.horizon();

  // KKT terms that depend on theta at a frozen primal-dual point.
  auto terms = [&](const VectorXd& v, int k) -> VectorXd {
    const HorizonWeights w = Expand(ThetaParams(prob.theta.layout(), v), n);
    MatrixXd a, b;
    model.Linearize(sol.states[0], prob.controls[0], a, b);
    const VectorXd r0 = prob.measurements[0] - h * sol.states[0];
    VectorXd out(3 * 24);
    out.segment(0, 24) = (h.transpose() * w.r[0].cwiseProduct(r0) + a.transpose() * sol.duals[0])
                             .cwiseQuotient(w.p);
    const VectorXd rk = prob.measurements[k] - h * sol.states[k];
    out.segment(24, 24) = h.transpose() * w.r[k].cwiseProduct(rk);
    model.Linearize(sol.states[k], prob.controls[k], a, b);
    out.segment(48, 24) =
        b * w.q[k].cwiseInverse().cwiseProduct(b.transpose() * sol.duals[k]);
    return out;
  };
  for (int k = 1; k + 1 < n; ++k) {
    const MatrixXd fd = testing::NumericJacobian(
        [&](const VectorXd& v) { return terms(v, k); }, prob.theta.values(), 1e-6);
    MatrixXd analytic(72, prob.theta.size());
    analytic << m.f, m.e[k], m.d[k];
    const double scale = fd.cwiseAbs().maxCoeff();
    EXPECT_LT((analytic - fd).cwiseAbs().maxCoeff(), 1e-6 * scale) << "k = " << k;
  }
}

TEST(DmheGradientTest, NoiselessFixtureHasZeroRightHandSides) {
  QuadrotorModel model(QuadrotorParams{}, 0.01);
  std::mt19937_64 rng(54);
  std::vector<VectorXd> truth;
  MheProblem prob = testing::MakeQuadrotorProblem(rng, model, 6, 0.0, DefaultTheta(), &truth);
  prob.prior = truth[0];
  const HorizonSolution sol = MheSolver(model).Solve(prob);
  const DiffKktMatrices m = BuildDiffKkt(model, prob, sol);
  for (const auto& d : m.d) EXPECT_LT(d.cwiseAbs().maxCoeff(), 1e-9);
  for (const auto& e : m.e) EXPECT_LT(e.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT(m.f.cwiseAbs().maxCoeff(), 1e-9);
  const GradientTrajectory t = KalmanGradient(m);
  for (const auto& x : t.x) EXPECT_LT(x.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(DmheGradientTest, RecursionAgreesWithDirectSolveOnQuadrotor) {
  QuadrotorModel model(QuadrotorParams{}, 0.01);
  std::mt19937_64 rng(55);
  const MheProblem prob = testing::MakeQuadrotorProblem(rng, model, 10, 1e-2, DefaultTheta());
  const HorizonSolution sol = MheSolver(model).Solve(prob);
  const DiffKktMatrices m = BuildDiffKkt(model, prob, sol);
  const GradientTrajectory rec = KalmanGradient(m);
  const GradientTrajectory dir = DirectKktSolve(m);
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) worst = std::max(worst, (rec.x[k] - dir.x[k]).cwiseAbs().maxCoeff());
  EXPECT_LT(worst, 1e-8);
  EXPECT_LT(DiffKktResidual(m, rec), 1e-8);
}

TEST(DmheGradientTest, RejectsUnconvergedSolution) {
  QuadrotorModel model(QuadrotorParams{}, 0.01);
  std::mt19937_64 rng(56);
  const MheProblem prob = testing::MakeQuadrotorProblem(rng, model, 5, 1e-2, DefaultTheta());
  HorizonSolution sol = MheSolver(model).Solve(prob);
  sol.kkt_residual = 1e-3;
  EXPECT_THROW(BuildDiffKkt(model, prob, sol), std::invalid_argument);
}

TEST(DmheGradientTest, FlippedResidualTermChangesGradient) {
  QuadrotorModel model(QuadrotorParams{}, 0.01);
  std::mt19937_64 rng(57);
  const MheProblem prob = testing::MakeQuadrotorProblem(rng, model, 5, 1e-2, DefaultTheta());
  const HorizonSolution sol = MheSolver(model).Solve(prob);
  GradientOptions flipped;
  flipped.flip_e_sign = true;
  const GradientTrajectory good = EstimateSensitivity(model, prob, sol);
  const GradientTrajectory bad = EstimateSensitivity(model, prob, sol, flipped);
  EXPECT_GT((good.x.back() - bad.x.back()).cwiseAbs().maxCoeff(),
            0.1 * good.x.back().cwiseAbs().maxCoeff());
}

}  // namespace
}  // namespace dmhe
