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

// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dmhe/config.h"
#include "dmhe/control.h"
#include "dmhe/export.h"
#include "dmhe/harness.h"
#include "dmhe/learning.h"
#include "dmhe/rigid_body.h"
#include "dmhe/scenarios.h"
#include "dmhe/verification.h"
#include "dmhe/weights.h"
#include "fd_util.h"

namespace dmhe {
namespace {

using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

const std::vector<int> kForceChannels = {0, 1, 2};
const std::vector<std::array<double, 2>> kInitialConditions = {
    {0.4, 0.8}, {0.6, 0.8}, {0.8, 0.8}, {0.8, 0.6}};

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string Fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

double Seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Trained state shared by the criteria that need a tuned estimator.
struct TrainingRun {
  std::vector<ConditionResult> conditions;
  bool available = false;
};

// ---------------------------------------------------------------------------

Outcome GradientCorrectness(const HarnessConfig& config) {
  const GradientCheckReport r = CheckLossGradient(config);
  Outcome o;
  o.passed = r.passed && r.seconds < 30.0;
  o.detail = "max rel err " + Fmt("%.3g", r.max_relative_error) + " (tol " +
             Fmt("%.0e", r.tolerance) + "), N = " + std::to_string(r.horizon) + ", " +
             Fmt("%.2f", r.seconds) + " s (limit 30 s)";
  if (!r.error.empty()) o.detail += ", error: " + r.error;
  return o;
}

Outcome OracleEquivalence(const HarnessConfig& config) {
  const OracleReport r = CheckOracleEquivalence(config);
  Outcome o;
  o.passed = r.passed && r.seconds < 60.0;
  o.detail = std::to_string(r.instances) + " instances, max abs diff " +
             Fmt("%.3g", r.max_abs_difference) + ", residuals " +
             Fmt("%.3g", r.max_residual_recursion) + " / " + Fmt("%.3g", r.max_residual_direct) +
             " (tol 1e-8), " + Fmt("%.2f", r.seconds) + " s (limit 60 s)";
  if (!r.errors.empty()) o.detail += ", " + std::to_string(r.errors.size()) + " errors";
  return o;
}

// Records the largest solver noise and dual over every window.
class WindowMonitor final : public EpisodeHooks {
 public:
  void AfterEstimate(const StepContext& ctx, ThetaParams& /*theta*/,
                     ControlGains& /*gains*/) override {
    if (ctx.solution == nullptr) return;
    ++windows;
    for (const VectorXd& eta : ctx.solution->noises) {
      max_noise = std::max(max_noise, eta.cwiseAbs().maxCoeff());
    }
    for (const VectorXd& lambda : ctx.solution->duals) {
      max_dual = std::max(max_dual, lambda.cwiseAbs().maxCoeff());
    }
    // Smoothed states of samples already in the log.
    const int n = static_cast<int>(ctx.solution->states.size());
    for (int k = 0; k < n; ++k) {
      const int step = ctx.window_first_step + k;
      if (step >= static_cast<int>(ctx.log->steps.size())) break;
      const VectorXd diff = ctx.solution->states[k] - ctx.log->steps[step].truth;
      max_window_error = std::max(max_window_error, diff.cwiseAbs().maxCoeff());
    }
  }

  double max_noise = 0.0;
  double max_dual = 0.0;
  double max_window_error = 0.0;
  int windows = 0;
};

Outcome NoiselessRecovery(HarnessConfig config) {
  config.scenario.name = "nominal";
  config.sim.measurement_variance = 0.0;
  config.sim.process_variance = 0.0;
  config.sim.truth = TruthModel::kEuler;
  const ClosedLoopSetup setup = config.Setup();
  const auto reference = config.scenario.Reference();
  WindowMonitor monitor;
  const EpisodeLog log = RunClosedLoop(setup, *reference, DisturbanceProfile::None(), &monitor);
  double max_error = 0.0;
  for (const StepRecord& r : log.steps) {
    max_error = std::max(max_error, (r.estimate - r.truth).cwiseAbs().maxCoeff());
  }
  max_error = std::max(max_error, monitor.max_window_error);
  Outcome o;
  o.passed = !log.aborted && monitor.windows > 0 && max_error < 1e-6 && monitor.max_noise < 1e-8 &&
             monitor.max_dual < 1e-8;
  o.detail = "max |xhat - x| " + Fmt("%.3g", max_error) + " (tol 1e-6), max |eta| " +
             Fmt("%.3g", monitor.max_noise) + ", max |lambda| " + Fmt("%.3g", monitor.max_dual) +
             " (tol 1e-8), " + std::to_string(monitor.windows) + " windows";
  if (log.aborted) o.detail += ", aborted: " + log.abort_reason;
  return o;
}

EpisodeLog RunFixed(HarnessConfig config, const std::string& scenario, const ThetaParams& theta,
                    bool feedforward = true) {
  config.scenario.name = scenario;
  config.control.feedforward = feedforward;
  ClosedLoopSetup setup = config.Setup();
  setup.theta = theta;
  const auto reference = config.scenario.Reference();
  return RunClosedLoop(setup, *reference, config.scenario.Disturbance());
}

Outcome PayloadAccuracy(const HarnessConfig& config, const TrainingRun& training) {
  if (!training.available) return {false, "no trained theta (training failed)"};
  const ThetaParams& theta = training.conditions.front().theta;
  const EpisodeLog log = RunFixed(config, "payload", theta);
  if (log.aborted) return {false, "episode aborted: " + log.abort_reason};
  const double weight = config.scenario.payload_weight;
  const double release = config.scenario.payload_release_time;
  // Steady carrying window: after takeoff and the ground-effect zone.
  std::vector<double> steady, after;
  std::vector<std::pair<double, double>> falling;
  for (const StepRecord& r : log.steps) {
    const double dz = r.estimate(state::kForce + 2);
    if (r.time >= 10.0 && r.time < release) steady.push_back(dz);
    if (r.time >= release) falling.emplace_back(r.time, dz);
    if (r.time >= release + 2.0) after.push_back(dz);
  }
  if (steady.empty() || after.empty()) return {false, "scenario too short"};
  double mean = 0.0;
  for (double v : steady) mean += v;
  mean /= static_cast<double>(steady.size());
  double var = 0.0;
  for (double v : steady) var += (v - mean) * (v - mean);
  const double std_dev = std::sqrt(var / static_cast<double>(steady.size()));
  double final_value = 0.0;
  for (double v : after) final_value += v;
  final_value /= static_cast<double>(after.size());
  // 90% to 10% transition of the release step.
  const double hi = final_value + 0.9 * (mean - final_value);
  const double lo = final_value + 0.1 * (mean - final_value);
  double t_hi = -1.0, t_lo = -1.0;
  for (const auto& [t, v] : falling) {
    if (t_hi < 0.0 && v <= hi) t_hi = t;
    if (t_hi >= 0.0 && v <= lo) {
      t_lo = t;
      break;
    }
  }
  const double rise = (t_hi >= 0.0 && t_lo >= 0.0) ? t_lo - t_hi : INFINITY;
  const double rel = std::abs(std::abs(mean) - weight) / weight;
  Outcome o;
  o.passed = rel < 0.05 && std_dev < 0.2 && rise < 0.5;
  o.detail = "steady |d_fz| " + Fmt("%.3f", std::abs(mean)) + " N (" + Fmt("%.2f", 100 * rel) +
             "% error, tol 5%), std " + Fmt("%.3f", std_dev) + " N (tol 0.2), rise time " +
             Fmt("%.3f", rise) + " s (tol 0.5)";
  return o;
}

TrainingRun Train(HarnessConfig config) {
  config.scenario.name = "composite";
  config.learning.convergence_tolerance = 0.0;  // always run five episodes
  TrainingRun run;
  for (const auto& initial : kInitialConditions) {
    const auto start = std::chrono::steady_clock::now();
    run.conditions.push_back(TrainCondition(config, initial, 5));
    const ConditionResult& c = run.conditions.back();
    std::printf("  condition (%.1f, %.1f): %zu episodes in %.0f s, losses", initial[0],
                initial[1], c.episodes.size(), Seconds(start));
    for (const EpisodeSummary& e : c.episodes) std::printf(" %.4g", e.mean_loss);
    const ThetaLayout& l = c.theta.layout();
    std::printf(", gamma1 %.4f, gamma2 %.4f\n", c.theta.values()(l.gamma1_index()),
                c.theta.values()(l.gamma2_index()));
    std::fflush(stdout);
  }
  run.available = !run.conditions.front().failed;
  return run;
}

Outcome TrainingConvergence(const TrainingRun& run) {
  Outcome o;
  o.passed = true;
  std::vector<double> finals;
  std::ostringstream detail;
  for (std::size_t i = 0; i < run.conditions.size(); ++i) {
    const ConditionResult& c = run.conditions[i];
    if (c.failed || c.episodes.size() < 5) {
      o.passed = false;
      detail << "condition " << i + 1 << " failed; ";
      continue;
    }
    const double ratio = c.episodes[4].mean_loss / c.episodes[0].mean_loss;
    if (!(ratio < 0.5)) o.passed = false;
    finals.push_back(c.episodes[4].mean_loss);
    detail << "c" << i + 1 << " l5/l1 " << Fmt("%.3f", ratio) << "; ";
  }
  if (!finals.empty()) {
    const auto [lo, hi] = std::minmax_element(finals.begin(), finals.end());
    const double spread = *hi / *lo;
    if (!(spread <= 1.2)) o.passed = false;
    detail << "final max/min " << Fmt("%.3f", spread) << " (tol l5/l1 < 0.5, max/min <= 1.2)";
  }
  o.detail = detail.str();
  return o;
}

Outcome WeightStructure(const TrainingRun& run) {
  if (!run.available) return {false, "condition 1 training failed"};
  const ThetaParams& t = run.conditions.front().theta;
  const double g1 = t.values()(t.layout().gamma1_index());
  const double g2 = t.values()(t.layout().gamma2_index());
  return {g1 > g2 && g2 < 0.4,
          "gamma1 " + Fmt("%.4f", g1) + ", gamma2 " + Fmt("%.4f", g2) +
              " (need gamma1 > gamma2 and gamma2 < 0.4)"};
}

Outcome TrainedVsUntrained(const HarnessConfig& config, const TrainingRun& run) {
  if (!run.available) return {false, "condition 1 training failed"};
  const ConditionResult& c = run.conditions.front();
  const EpisodeLog untrained = RunFixed(config, "composite", c.initial_theta);
  const EpisodeLog trained = RunFixed(config, "composite", c.theta);
  if (untrained.aborted || trained.aborted) return {false, "episode aborted"};
  const double a = untrained.DisturbanceRms(kForceChannels);
  const double b = trained.DisturbanceRms(kForceChannels);
  return {b <= 0.5 * a, "force estimation rms untrained " + Fmt("%.4f", a) + " N, trained " +
                            Fmt("%.4f", b) + " N, ratio " + Fmt("%.3f", b / a) + " (tol 0.5)"};
}

Outcome TimingEnvelope(const HarnessConfig& config) {
  const BenchReport r = RunBenchmark(config);
  std::ostringstream detail;
  for (const BenchRow& row : r.rows) {
    detail << "N=" << row.horizon << " " << Fmt("%.2f", row.mean_ms) << "/"
           << Fmt("%.1f", row.limit_ms) << " ms; ";
  }
  detail << "R^2 " << Fmt("%.4f", r.fit.r_squared) << " (tol 0.95)";
  if (!r.error.empty()) detail << ", error: " << r.error;
  return {r.passed, detail.str()};
}

Outcome DownwashRobustness(const HarnessConfig& config, const TrainingRun& run) {
  if (!run.available) return {false, "no trained theta (training failed)"};
  const ThetaParams& theta = run.conditions.front().theta;
  const double onset = config.scenario.downwash_onset;
  const double duration = config.scenario.downwash_duration;
  const auto deviation = [&](const EpisodeLog& log, double from) {
    double worst = 0.0;
    for (const StepRecord& r : log.steps) {
      if (r.time < from) continue;
      worst = std::max(worst, std::abs(r.truth(state::kPos + 2) - r.reference.position.z()));
    }
    return worst;
  };
  const EpisodeLog compensated = RunFixed(config, "downwash", theta, true);
  const EpisodeLog baseline = RunFixed(config, "downwash", theta, false);
  if (compensated.aborted || baseline.aborted) return {false, "episode aborted"};
  const double peak_c = deviation(compensated, onset);
  const double peak_b = deviation(baseline, onset);
  const double tail = deviation(compensated, duration - 2.0);
  return {peak_c < 0.25 * peak_b && tail < 0.05,
          "peak altitude deviation compensated " + Fmt("%.4f", peak_c) + " m, baseline " +
              Fmt("%.4f", peak_b) + " m, ratio " + Fmt("%.3f", peak_c / peak_b) +
              " (tol 0.25); final 2 s max " + Fmt("%.4f", tail) + " m (tol 0.05)"};
}

// ---------------------------------------------------------------------------
// Property suites.

double RigidBodyJacobianError() {
  QuadrotorParams p;
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Vector24 x = testing::RandomState(rng);
    const ControlInput u = testing::RandomControl(rng, p);
    const Vector6 eta = Vector6::Constant(0.1 * trial);
    const StepJacobians jac = Jacobians(x, u, 0.01, p);
    const MatrixXd fd_a = testing::NumericJacobian(
        [&](const VectorXd& z) -> VectorXd { return EulerStep(Vector24(z), u, eta, 0.01, p); },
        x, 1e-6);
    const MatrixXd fd_b = testing::NumericJacobian(
        [&](const VectorXd& e) -> VectorXd { return EulerStep(x, u, Vector6(e), 0.01, p); }, eta,
        1e-6);
    worst = std::max({worst, testing::MaxRelativeError(jac.A, fd_a, 1e-3),
                      testing::MaxRelativeError(jac.B, fd_b, 1e-3)});
  }
  return worst;
}

double CurvatureError() {
  QuadrotorParams p;
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Vector24 x = testing::RandomState(rng);
    const ControlInput u = testing::RandomControl(rng, p);
    Vector24 lambda;
    for (int i = 0; i < 24; ++i) lambda(i) = n(rng);
    const Matrix24 g = CurvatureTerm(x, lambda, 0.01, p);
    const MatrixXd fd = testing::NumericJacobian(
        [&](const VectorXd& z) -> VectorXd {
          return Jacobians(Vector24(z), u, 0.01, p).A.transpose() * lambda;
        },
        x, 1e-5);
    worst = std::max(worst, testing::MaxRelativeError(g, fd, 1e-4));
  }
  return worst;
}

double WeightPartialsError() {
  std::mt19937_64 rng(21);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const ThetaParams t = RandomTheta(rng);
    const int n = 8;
    for (int k = 0; k < n; ++k) {
      const StagePartials sp = ThetaPartials(t, n, k);
      const auto stage = [&](const VectorXd& v) -> VectorXd {
        const HorizonWeights w = Expand(ThetaParams(t.layout(), v), n);
        VectorXd out(24 + 18 + 6);
        out << w.p, w.r[k], (k + 1 < n ? w.q[k] : VectorXd::Zero(6));
        return out;
      };
      const MatrixXd fd = testing::NumericJacobian(stage, t.values(), 1e-7);
      MatrixXd analytic(48, t.size());
      analytic << sp.dp, sp.dr, sp.dq;
      worst = std::max(worst, testing::MaxRelativeError(analytic, fd, 1e-2));
    }
  }
  return worst;
}

// Relative to the largest finite-difference entry, as in the unit suite.
double ControlJacobianError() {
  QuadrotorParams p;
  std::mt19937_64 rng(62);
  std::normal_distribution<double> n(0.0, 1.0);
  ReferencePoint ref;
  ref.position = Vector3d(0.0, 0.1, -1.1);
  ref.velocity = Vector3d(0.3, -0.2, 0.0);
  ref.acceleration = Vector3d(0.1, 0.2, -0.1);
  ref.heading = Vector3d(1.0, 0.01, 0.0).normalized();
  double worst = 0.0;
  for (ControlLaw law : {ControlLaw::kGeometric, ControlLaw::kPdBaseline}) {
    ControlOptions opt;
    opt.law = law;
    const ControlGains gains;
    for (int trial = 0; trial < 10; ++trial) {
      Vector24 x = HoverState(Vector3d(0.2, -0.1, -1.0));
      for (int i = 0; i < 6; ++i) x(i) += 0.2 * n(rng);
      const Eigen::Matrix3d tilt =
          Eigen::AngleAxisd(0.05, Vector3d(n(rng), n(rng), 0.1).normalized()).toRotationMatrix();
      SetRotation(tilt * ComputeControl(ref, x, gains, p, opt).desired_attitude, x);
      for (int i = 15; i < 24; ++i) x(i) += 0.01 * n(rng);
      if (ComputeControl(ref, x, gains, p, opt).clamped_motors != 0) continue;
      const ControlJacobian jac = ControlJacobians(ref, x, gains, p, opt);
      const MatrixXd fd_x = testing::NumericJacobian(
          [&](const VectorXd& z) -> VectorXd {
            return ComputeControl(ref, Vector24(z), gains, p, opt).input.u;
          },
          x, 1e-6);
      VectorXd g(6);
      g << gains.kp, gains.kv;
      const MatrixXd fd_g = testing::NumericJacobian(
          [&](const VectorXd& k) -> VectorXd {
            ControlGains gg = gains;
            gg.kp = k.head<3>();
            gg.kv = k.tail<3>();
            return ComputeControl(ref, x, gg, p, opt).input.u;
          },
          g, 1e-6);
      worst = std::max(worst, (jac.du_dx - fd_x).cwiseAbs().maxCoeff() /
                                  fd_x.cwiseAbs().maxCoeff());
      worst = std::max(worst, (jac.du_dgains - fd_g).cwiseAbs().maxCoeff() /
                                  fd_g.cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

double LossGradientError() {
  std::mt19937_64 rng(4);
  LossConfig cfg;
  cfg.beta = 0.3;
  cfg.kappa.segment<9>(state::kRot).setConstant(0.05);
  cfg.kappa.segment<3>(state::kRate).setConstant(0.02);
  const int n = 5;
  std::vector<VectorXd> xs;
  std::vector<Vector18> refs;
  for (int k = 0; k < n; ++k) xs.push_back(testing::RandomState(rng));
  for (int k = 0; k < n; ++k) refs.push_back(Measure(testing::RandomState(rng)));
  const TrackingLoss l = EvaluateTrackingLoss(xs, refs, cfg);
  double worst = 0.0;
  for (int k = 0; k < n; ++k) {
    const auto fn = [&](const VectorXd& x) {
      auto ys = xs;
      ys[k] = x;
      return VectorXd::Constant(1, EvaluateTrackingLoss(ys, refs, cfg).total);
    };
    const MatrixXd fd = testing::NumericJacobian(fn, xs[k], 1e-2);
    worst = std::max(worst, testing::MaxRelativeError(l.gradient[k].transpose(), fd, 1e-3));
  }
  return worst;
}

double MlpBackwardError() {
  MlpPolicy net(6, 50, 20, 5);
  VectorXd p = net.Parameters();
  const int slope_offset = 6 * 50 + 50;
  for (int i = 0; i < 50; ++i) p(slope_offset + i) = 0.1 + 0.01 * i;
  net.SetParameters(p);
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n(0.0, 1.0);
  VectorXd x(6), up(20);
  for (int i = 0; i < 6; ++i) x(i) = n(rng);
  for (int i = 0; i < 20; ++i) up(i) = n(rng);
  const VectorXd g = net.Backward(x, up);
  const auto fn = [&](const VectorXd& params) {
    MlpPolicy m = net;
    m.SetParameters(params);
    return VectorXd::Constant(1, up.dot(m.Forward(x)));
  };
  const MatrixXd fd = testing::NumericJacobian(fn, p, 1e-6);
  return testing::MaxRelativeError(g.transpose(), fd, 1e-6);
}

std::string EpisodeCsv(const EpisodeLog& log) {
  std::ostringstream out;
  WriteEpisodeCsv(out, log);
  return out.str();
}

Outcome PropertySuites(const HarnessConfig& config) {
  struct Check {
    const char* name;
    std::function<double()> error;
    double tolerance;
  };
  const std::vector<Check> checks = {
      {"rigid_body A/B", RigidBodyJacobianError, 1e-6},
      {"rigid_body curvature", CurvatureError, 1e-5},
      {"weights partials", WeightPartialsError, 1e-6},
      {"control Jacobians", ControlJacobianError, 1e-5},
      {"learning loss gradient", LossGradientError, 1e-7},
      {"learning MLP backward", MlpBackwardError, 1e-5},
  };
  Outcome o;
  o.passed = true;
  std::ostringstream detail;
  for (const Check& c : checks) {
    const double err = c.error();
    if (!(err < c.tolerance)) o.passed = false;
    detail << c.name << " " << Fmt("%.2g", err) << "/" << Fmt("%.0e", c.tolerance) << "; ";
  }

  // Two consecutive simulate runs write byte-identical episode logs.
  namespace fs = std::filesystem;
  const fs::path base = fs::temp_directory_path() / ("dmhe_acceptance_" + std::to_string(
                                                         std::random_device{}()));
  std::ostringstream sink;
  CommandContext ctx;
  ctx.out = &sink;
  ctx.err = &sink;
  std::string csv[2];
  for (int i = 0; i < 2; ++i) {
    ctx.out_dir = (base / ("run" + std::to_string(i))).string();
    if (RunSimulate(config, ctx) != ExitCode::kSuccess) o.passed = false;
    csv[i] = ReadTextFile((fs::path(ctx.out_dir) / "episode.csv").string());
  }
  fs::remove_all(base);
  const bool simulate_identical = !csv[0].empty() && csv[0] == csv[1];

  // Two consecutive training episodes produce identical logs and theta.
  HarnessConfig short_config = config;
  short_config.scenario.composite_duration = 2.0;
  std::string log_a, log_b;
  const ConditionResult a =
      TrainCondition(short_config, kInitialConditions[0], 1,
                     [&](int, const EpisodeLog& log) { log_a = EpisodeCsv(log); });
  const ConditionResult b =
      TrainCondition(short_config, kInitialConditions[0], 1,
                     [&](int, const EpisodeLog& log) { log_b = EpisodeCsv(log); });
  const bool training_identical =
      a.theta.values() == b.theta.values() && !log_a.empty() && log_a == log_b;
  if (!simulate_identical || !training_identical) o.passed = false;
  detail << "simulate logs " << (simulate_identical ? "identical" : "DIFFER")
         << ", training logs " << (training_identical ? "identical" : "DIFFER");
  o.detail = detail.str();
  return o;
}

// ---------------------------------------------------------------------------

int Main() {
  const HarnessConfig config;
  int failures = 0;
  const auto report = [&](int id, const char* name, const std::function<Outcome()>& run) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.passed) ++failures;
    std::printf("[%s] criterion %d (%s): %s [%.1f s]\n", o.passed ? "PASS" : "FAIL", id, name,
                o.detail.c_str(), Seconds(start));
    std::fflush(stdout);
  };

  report(1, "gradient correctness", [&] { return GradientCorrectness(config); });
  report(2, "oracle equivalence", [&] { return OracleEquivalence(config); });
  report(3, "noiseless recovery", [&] { return NoiselessRecovery(config); });

  std::printf("training four initial conditions for five episodes each\n");
  std::fflush(stdout);
  TrainingRun training;
  try {
    training = Train(config);
  } catch (const std::exception& e) {
    std::printf("  training raised: %s\n", e.what());
  }

  report(4, "payload estimation", [&] { return PayloadAccuracy(config, training); });
  report(5, "training convergence", [&] { return TrainingConvergence(training); });
  report(6, "trained weight structure", [&] { return WeightStructure(training); });
  report(7, "trained vs untrained estimation", [&] { return TrainedVsUntrained(config, training); });
  report(8, "timing envelope", [&] { return TimingEnvelope(config); });
  report(9, "downwash robustness", [&] { return DownwashRobustness(config, training); });
  report(10, "property suites and determinism", [&] { return PropertySuites(config); });

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

}  // namespace
}  // namespace dmhe

int main() { return dmhe::Main(); }
