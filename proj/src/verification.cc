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

#include "dmhe/verification.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dmhe/dmhe_gradient.h"
#include "dmhe/errors.h"
#include "dmhe/export.h"
#include "dmhe/kkt_recursion.h"
#include "dmhe/learning.h"

namespace dmhe {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double Ms(Clock::duration d) { return std::chrono::duration<double, std::milli>(d).count(); }

// Captures the horizon problem, its solution and the window references at
// one step of a closed-loop episode.
class SnapshotHooks final : public EpisodeHooks {
 public:
  explicit SnapshotHooks(int step) : step_(step) {}

  void AfterStep(const StepContext& ctx, StepRecord& rec, ThetaParams&, ControlGains&) override {
    if (ctx.step != step_ || ctx.solution == nullptr) return;
    problem = *ctx.problem;
    solution = *ctx.solution;
    references.clear();
    const int n = static_cast<int>(ctx.solution->states.size());
    for (int k = 0; k < n; ++k) {
      const int s = ctx.window_first_step + k;
      const StepRecord& r = s == rec.step ? rec : ctx.log->steps[s];
      references.push_back(ReferenceState(r.reference));
    }
    captured = true;
  }

  bool captured = false;
  MheProblem problem;
  HorizonSolution solution;
  std::vector<Vector18> references;

 private:
  int step_;
};

// Times the sensitivity engine at every differentiable step.
class TimingHooks final : public EpisodeHooks {
 public:
  explicit TimingHooks(double max_kkt_residual) : max_kkt_(max_kkt_residual) {}

  void AfterStep(const StepContext& ctx, StepRecord& rec, ThetaParams&, ControlGains&) override {
    if (ctx.solution == nullptr || ctx.solution->states.size() < 2 ||
        ctx.solution->kkt_residual > max_kkt_) {
      return;
    }
    GradientOptions options;
    options.max_kkt_residual = max_kkt_;
    const auto t0 = Clock::now();
    const GradientTrajectory sens =
        EstimateSensitivity(*ctx.model, *ctx.problem, *ctx.solution, options);
    rec.gradient_ms = Ms(Clock::now() - t0);
    if (!sens.x.back().allFinite()) throw NonFiniteError(ctx.step, "sensitivity");
    samples.push_back(rec.gradient_ms);
  }

  std::vector<double> samples;

 private:
  double max_kkt_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Loss gradient check.

json GradientCheckReport::ToJson() const {
  const ThetaParams names;
  json components = json::array();
  for (int j = 0; j < analytic.size(); ++j) {
    components.push_back({{"index", j},
                          {"group", names.GroupName(j)},
                          {"analytic", analytic(j)},
                          {"finite_difference", finite_difference(j)},
                          {"relative_error", relative_error(j)}});
  }
  return {{"check", "loss_gradient_vs_finite_differences"},
          {"snapshot_step", snapshot_step},
          {"horizon", horizon},
          {"snapshot_kkt_residual", snapshot_kkt_residual},
          {"floor", floor},
          {"max_relative_error", max_relative_error},
          {"worst_component", worst_component},
          {"tolerance", tolerance},
          {"passed", passed},
          {"error", error},
          {"seconds", seconds},
          {"components", components}};
}

GradientCheckReport CheckLossGradient(const HarnessConfig& config) {
  const auto t0 = Clock::now();
  const GradcheckConfig& gc = config.gradcheck;
  GradientCheckReport report;
  report.horizon = gc.horizon;
  report.snapshot_step = gc.snapshot_step;
  report.tolerance = gc.gradient_tolerance;

  ClosedLoopSetup setup = config.Setup();
  setup.sim.horizon = gc.horizon;
  setup.sim.duration = std::min(setup.sim.duration, (gc.snapshot_step + 1) * setup.sim.dt);
  const auto reference = config.scenario.Reference();
  SnapshotHooks hooks(gc.snapshot_step);
  const EpisodeLog log = RunClosedLoop(setup, *reference, config.scenario.Disturbance(), &hooks);
  if (!hooks.captured) {
    report.error = log.aborted ? "episode aborted: " + log.abort_reason
                               : "snapshot step not reached";
    report.seconds = Seconds(t0);
    return report;
  }

  const QuadrotorModel model(setup.params, setup.sim.dt);
  MheOptions options = setup.mhe;
  options.tolerance = gc.solver_tolerance;
  options.max_iterations = std::max(options.max_iterations, 100);
  const MheSolver solver(model, options);
  const HorizonSolution sol = solver.Solve(hooks.problem, &hooks.solution);
  report.snapshot_kkt_residual = sol.kkt_residual;
  const LossConfig loss = config.learning.Loss();
  const auto loss_of = [&](const MheProblem& p) {
    return EvaluateTrackingLoss(solver.Solve(p, &sol).states, hooks.references, loss).total;
  };

  GradientOptions grad_options;
  grad_options.max_kkt_residual = std::max(config.learning.max_kkt_residual, 10.0 * sol.kkt_residual);
  grad_options.flip_e_sign = gc.flip_e_sign;
  try {
    const TrackingLoss l = EvaluateTrackingLoss(sol.states, hooks.references, loss);
    report.analytic =
        ChainRuleDirect(l, EstimateSensitivity(model, hooks.problem, sol, grad_options));
  } catch (const std::exception& e) {
    report.error = e.what();
    report.seconds = Seconds(t0);
    return report;
  }

  const int m = static_cast<int>(report.analytic.size());
  report.finite_difference.resize(m);
  for (int j = 0; j < m; ++j) {
    const double h = gc.fd_relative_step * std::max(std::abs(hooks.problem.theta.values()(j)), 1e-3);
    MheProblem plus = hooks.problem, minus = hooks.problem;
    plus.theta.mutable_values()(j) += h;
    minus.theta.mutable_values()(j) -= h;
    report.finite_difference(j) = (loss_of(plus) - loss_of(minus)) / (2.0 * h);
  }
  // Components whose derivative is below 1e-6 of the largest one are compared
  // on that absolute scale.
  report.floor = 1e-6 * report.finite_difference.cwiseAbs().maxCoeff();
  report.relative_error.resize(m);
  for (int j = 0; j < m; ++j) {
    const double fd = report.finite_difference(j);
    report.relative_error(j) =
        std::abs(report.analytic(j) - fd) / std::max(std::abs(fd), report.floor);
  }
  report.max_relative_error = report.relative_error.maxCoeff(&report.worst_component);
  report.passed = report.analytic.allFinite() && report.max_relative_error < report.tolerance;
  report.seconds = Seconds(t0);
  return report;
}

// ---------------------------------------------------------------------------
// Oracle equivalence.

MheProblem RandomHorizonProblem(std::mt19937_64& rng, const QuadrotorModel& model, int horizon,
                                const ThetaParams& theta, double noise_sigma) {
  const QuadrotorParams& p = model.params();
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  Vector24 x = HoverState(Eigen::Vector3d(u(rng), u(rng), -1.0 - 0.5 * u(rng)));
  const Eigen::Vector3d tilt(0.2 * u(rng), 0.2 * u(rng), 3.0 * u(rng));
  SetRotation(Eigen::AngleAxisd(tilt.norm(), tilt.normalized()).toRotationMatrix(), x);
  for (int i = 0; i < 3; ++i) {
    x(state::kVel + i) = 0.5 * u(rng);
    x(state::kRate + i) = 0.1 * u(rng);
    x(state::kForce + i) = 2.0 * u(rng);
    x(state::kTorque + i) = 0.02 * u(rng);
  }
  MheProblem prob;
  prob.theta = theta;
  Vector24 first = x;
  for (int k = 0; k < horizon; ++k) {
    Eigen::VectorXd y = Measure(x);
    for (int i = 0; i < y.size(); ++i) y(i) += noise_sigma * n(rng);
    prob.measurements.push_back(y);
    if (k + 1 < horizon) {
      ControlInput c;
      for (int i = 0; i < 4; ++i) c.u(i) = p.HoverMotorInput() * (1.0 + 0.05 * u(rng));
      prob.controls.push_back(c.u);
      x = EulerStep(x, c, Vector6::Zero(), model.dt(), p);
    }
  }
  prob.prior = first;
  for (int i = 0; i < state::kQuadDim; ++i) prob.prior(i) += noise_sigma * n(rng);
  for (int i = state::kForce; i < state::kDim; ++i) prob.prior(i) *= 0.8;
  return prob;
}

ThetaParams RandomTheta(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ThetaParams theta;
  const ThetaLayout& l = theta.layout();
  Eigen::VectorXd& v = theta.mutable_values();
  for (int i = 0; i < l.state_dim; ++i) v(l.p_offset() + i) = 1.0 + 9.0 * u(rng);
  for (int i = 0; i < l.output_dim; ++i) v(l.r_offset() + i) = 10.0 + 90.0 * u(rng);
  for (int i = 0; i < l.noise_dim; ++i) v(l.q_offset() + i) = 10.0 + 90.0 * u(rng);
  v(l.gamma1_index()) = 0.5 + 0.49 * u(rng);
  v(l.gamma2_index()) = 0.5 + 0.49 * u(rng);
  return theta;
}

json OracleReport::ToJson() const {
  return {{"check", "recursion_vs_direct_solve"},
          {"instances", instances},
          {"horizon", horizon},
          {"max_abs_difference", max_abs_difference},
          {"max_residual_recursion", max_residual_recursion},
          {"max_residual_direct", max_residual_direct},
          {"worst_instance", worst_instance},
          {"tolerance", tolerance},
          {"residual_tolerance", residual_tolerance},
          {"errors", errors},
          {"passed", passed},
          {"seconds", seconds}};
}

OracleReport CheckOracleEquivalence(const HarnessConfig& config, int workers) {
  const auto t0 = Clock::now();
  const GradcheckConfig& gc = config.gradcheck;
  const QuadrotorModel model(config.quadrotor, config.sim.dt);
  MheOptions options = config.mhe;
  options.tolerance = gc.solver_tolerance;
  options.max_iterations = std::max(options.max_iterations, 100);
  const MheSolver solver(model, options);
  GradientOptions grad_options;
  grad_options.flip_e_sign = gc.flip_e_sign;

  struct Result {
    double diff = 0.0, res_rec = 0.0, res_dir = 0.0;
    std::string error;
  };
  std::vector<Result> results(gc.instances);
  std::atomic<int> next{0};
  const auto work = [&] {
    for (int i = next++; i < gc.instances; i = next++) {
      Result& r = results[i];
      try {
        // Each instance has its own stream so results do not depend on the
        // worker count.
        std::mt19937_64 rng(config.seed * 1000003ULL + static_cast<std::uint64_t>(i));
        const ThetaParams theta = RandomTheta(rng);
        const MheProblem prob = RandomHorizonProblem(rng, model, gc.horizon, theta);
        const HorizonSolution sol = solver.Solve(prob);
        const DiffKktMatrices mats = BuildDiffKkt(model, prob, sol, grad_options);
        const GradientTrajectory rec = KalmanGradient(mats);
        const GradientTrajectory dir = DirectKktSolve(mats);
        for (int k = 0; k < mats.horizon; ++k) {
          r.diff = std::max(r.diff, (rec.x[k] - dir.x[k]).cwiseAbs().maxCoeff());
          r.diff = std::max(r.diff, (rec.lambda[k] - dir.lambda[k]).cwiseAbs().maxCoeff());
        }
        r.res_rec = DiffKktResidual(mats, rec);
        r.res_dir = DiffKktResidual(mats, dir);
      } catch (const std::exception& e) {
        r.error = "instance " + std::to_string(i) + ": " + e.what();
      }
    }
  };
  std::vector<std::thread> threads;
  for (int w = 1; w < std::max(workers, 1); ++w) threads.emplace_back(work);
  work();
  for (auto& t : threads) t.join();

  OracleReport report;
  report.instances = gc.instances;
  report.horizon = gc.horizon;
  report.tolerance = gc.oracle_tolerance;
  report.residual_tolerance = gc.residual_tolerance;
  for (int i = 0; i < gc.instances; ++i) {
    const Result& r = results[i];
    if (!r.error.empty()) {
      report.errors.push_back(r.error);
      continue;
    }
    if (r.diff >= report.max_abs_difference) {
      report.max_abs_difference = r.diff;
      report.worst_instance = i;
    }
    report.max_residual_recursion = std::max(report.max_residual_recursion, r.res_rec);
    report.max_residual_direct = std::max(report.max_residual_direct, r.res_dir);
  }
  report.passed = report.errors.empty() && report.max_abs_difference < report.tolerance &&
                  report.max_residual_recursion < report.residual_tolerance &&
                  report.max_residual_direct < report.residual_tolerance;
  report.seconds = Seconds(t0);
  return report;
}

// ---------------------------------------------------------------------------
// Benchmark.

LinearFit FitLine(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("FitLine: need at least two points of equal-length data");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("FitLine: x values are all equal");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (fit.intercept + fit.slope * x[i]);
    ss_res += e * e;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

json BenchReport::ToJson() const {
  json rows_json = json::array();
  for (const BenchRow& r : rows) {
    rows_json.push_back({{"horizon", r.horizon},
                         {"samples", r.samples},
                         {"mean_ms", r.mean_ms},
                         {"median_ms", r.median_ms},
                         {"solve_mean_ms", r.solve_mean_ms},
                         {"reference_ms", r.reference_ms},
                         {"limit_ms", r.limit_ms},
                         {"within_envelope", r.within_envelope}});
  }
  return {{"rows", rows_json},
          {"fit", {{"slope_ms_per_stage", fit.slope},
                   {"intercept_ms", fit.intercept},
                   {"r_squared", fit.r_squared}}},
          {"monotonic", monotonic},
          {"passed", passed},
          {"error", error}};
}

std::string BenchReport::Csv() const {
  std::ostringstream out;
  out << "horizon,mean_ms,median_ms,reference_ms,limit_ms,within_envelope,samples,solve_mean_ms\n";
  for (const BenchRow& r : rows) {
    out << r.horizon << ',' << FormatDouble(r.mean_ms) << ',' << FormatDouble(r.median_ms) << ','
        << FormatDouble(r.reference_ms) << ',' << FormatDouble(r.limit_ms) << ','
        << (r.within_envelope ? 1 : 0) << ',' << r.samples << ','
        << FormatDouble(r.solve_mean_ms) << '\n';
  }
  return out.str();
}

BenchReport RunBenchmark(const HarnessConfig& config) {
  const BenchConfig& bc = config.bench;
  BenchReport report;
  const auto reference = config.scenario.Reference();
  const DisturbanceProfile disturbance = config.scenario.Disturbance();
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < bc.horizons.size(); ++i) {
    ClosedLoopSetup setup = config.Setup();
    setup.sim.horizon = bc.horizons[i];
    setup.sim.duration = bc.duration;
    TimingHooks hooks(config.learning.max_kkt_residual);
    const EpisodeLog log = RunClosedLoop(setup, *reference, disturbance, &hooks);
    BenchRow row;
    row.horizon = bc.horizons[i];
    const TimingStats t = TimingStats::Of(hooks.samples);
    row.samples = t.count;
    row.mean_ms = t.mean;
    row.median_ms = t.median;
    row.solve_mean_ms = SolveTiming(log).mean;
    row.reference_ms = bc.reference_ms[i];
    row.limit_ms = bc.envelope_factor * row.reference_ms;
    row.within_envelope = t.count > 0 && row.mean_ms <= row.limit_ms;
    if (log.aborted && report.error.empty()) {
      report.error = "horizon " + std::to_string(row.horizon) + ": " + log.abort_reason;
    }
    report.rows.push_back(row);
    xs.push_back(row.horizon);
    ys.push_back(row.mean_ms);
  }
  report.monotonic = true;
  for (std::size_t i = 1; i < report.rows.size(); ++i) {
    if (report.rows[i].mean_ms <= report.rows[i - 1].mean_ms) report.monotonic = false;
  }
  bool within = true;
  for (const BenchRow& r : report.rows) within = within && r.within_envelope;
  if (xs.size() >= 2) report.fit = FitLine(xs, ys);
  report.passed = report.error.empty() && within && report.fit.r_squared > bc.min_r_squared;
  return report;
}

}  // namespace dmhe
