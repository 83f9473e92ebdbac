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

#ifndef DMHE_SCENARIOS_H_
#define DMHE_SCENARIOS_H_

#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dmhe/control.h"
#include "dmhe/mhe.h"
#include "dmhe/rigid_body.h"
#include "dmhe/weights.h"

namespace dmhe {

// ---------------------------------------------------------------------------
// Reference trajectories (NED; altitude h corresponds to z = -h).

class ReferenceTrajectory {
 public:
  virtual ~ReferenceTrajectory() = default;
  virtual ReferencePoint At(double t) const = 0;
};

// Quintic takeoff from the ground to `altitude` over `takeoff_time`, zero
// velocity and acceleration at both ends.
struct Takeoff {
  double altitude = 1.5;
  double takeoff_time = 2.0;

  // z, z', z'' at time t.
  Eigen::Vector3d Evaluate(double t) const;
};

enum class HeadingMode { kTangent, kFixed };

// Figure-eight (lemniscate of Gerono) x = a sin(phi), y = (a/2) sin(2 phi)
// flown after the takeoff. The phase rate ramps smoothly from zero to
// 2 pi / period over `ramp_time`.
struct LemniscateConfig {
  double scale = 1.5;       // a, m
  double period = 8.0;      // s, after the ramp
  double ramp_time = 2.0;   // s
  Takeoff takeoff;
  HeadingMode heading = HeadingMode::kFixed;
};

class LemniscateReference final : public ReferenceTrajectory {
 public:
  explicit LemniscateReference(LemniscateConfig config);
  ReferencePoint At(double t) const override;
  const LemniscateConfig& config() const { return config_; }

  // Phase and its first two time derivatives.
  Eigen::Vector3d Phase(double t) const;

 private:
  LemniscateConfig config_;
};

// Takeoff followed by hover at the final altitude.
class HoverReference final : public ReferenceTrajectory {
 public:
  explicit HoverReference(Takeoff takeoff, Eigen::Vector3d heading = Eigen::Vector3d::UnitX());
  ReferencePoint At(double t) const override;

 private:
  Takeoff takeoff_;
  Eigen::Vector3d heading_;
};

// ---------------------------------------------------------------------------
// Disturbances. Channels 0-2 are the inertial force (N, NED), 3-5 the body
// torque (N m).

enum class DisturbanceKind { kSquareWave, kSinusoid, kGroundEffect, kPayloadRelease, kDownwash };

struct DisturbanceComponent {
  DisturbanceKind kind = DisturbanceKind::kSinusoid;
  int channel = 2;
  double amplitude = 0.0;   // N or N m
  double period = 1.0;      // s (square wave, sinusoid)
  double offset = 0.0;      // added constant
  double start_time = 0.0;  // s; zero output before
  double end_time = std::numeric_limits<double>::infinity();  // zero output after
  // Ground effect.
  double ground_coeff = 0.255;      // m
  double ground_ceiling = 1.0;      // m; inactive above
  double ground_min_height = 0.15;  // m
  double ground_cap = 0.5;          // max extra lift as a fraction of thrust
  // Downwash: smooth onset over `rise_time`, plus a band-limited
  // fluctuation of RMS-like size `fluctuation` built from fixed sinusoids.
  double rise_time = 1.0;
  double fluctuation = 0.0;
  std::uint64_t fluctuation_seed = 7;
};

class DisturbanceProfile {
 public:
  DisturbanceProfile() = default;
  explicit DisturbanceProfile(std::vector<DisturbanceComponent> components);

  // d_true at time t given the true state and the applied thrust (N).
  Vector6 Evaluate(double t, const Vector24& state, double thrust) const;

  const std::vector<DisturbanceComponent>& components() const { return components_; }
  void Add(const DisturbanceComponent& c);
  bool empty() const { return components_.empty(); }

  static DisturbanceProfile None() { return DisturbanceProfile(); }
  // Payload weight (+z in NED) until `release_time`.
  static DisturbanceProfile PayloadRelease(double weight = 5.87, double release_time = 20.5,
                                           bool ground_effect = true);
  // Downward force plateau starting at `onset`.
  static DisturbanceProfile Downwash(double magnitude = 4.0, double onset = 8.0,
                                     double fluctuation = 0.5, bool ground_effect = true);
  // Ground effect plus square-wave and sinusoidal forces and torques.
  static DisturbanceProfile Composite();

 private:
  struct Harmonic {
    double amplitude, frequency, phase;
  };
  std::vector<DisturbanceComponent> components_;
  std::vector<std::vector<Harmonic>> harmonics_;  // per component (downwash)
};

double SquareWave(double t, double period);

// Extra lift (N, positive up) from the ground-effect surrogate.
double GroundEffectLift(const DisturbanceComponent& c, double height, double thrust);

// ---------------------------------------------------------------------------
// Closed-loop simulation.

enum class TruthModel {
  kRk4,    // RK4 at sim_dt with re-orthonormalization (default)
  kEuler,  // the estimator's own Euler model at dt; used for exact-recovery checks
};

struct SimConfig {
  double dt = 0.01;
  double sim_dt = 0.005;
  double measurement_variance = 1e-6;
  double process_variance = 1e-2;
  double duration = 15.71;
  std::uint64_t seed = 1;
  int horizon = 25;
  TruthModel truth = TruthModel::kRk4;
  // Abort when the true position leaves this radius (m).
  double divergence_radius = 50.0;
  // Keeps the true vehicle at or above the ground plane z = 0.
  bool ground_contact = true;

  int steps() const;
  int substeps() const;
  // Throws std::invalid_argument.
  void Validate() const;
};

struct StepRecord {
  int step = 0;
  double time = 0.0;
  ReferencePoint reference;
  Vector24 truth = Vector24::Zero();        // disturbance slots hold d_true
  Vector18 measurement = Vector18::Zero();
  Vector24 estimate = Vector24::Zero();     // latest x_{t|t}
  Eigen::Vector4d control = Eigen::Vector4d::Zero();  // applied motor inputs
  Eigen::Vector4d wrench = Eigen::Vector4d::Zero();   // applied wrench
  Vector6 process_noise = Vector6::Zero();
  double loss = 0.0;
  Eigen::VectorXd theta;
  Eigen::Matrix<double, 6, 1> gains = Eigen::Matrix<double, 6, 1>::Zero();  // kp, kv
  int mhe_iterations = 0;
  double kkt_residual = 0.0;
  bool mhe_converged = true;
  int clamped_motors = 0;
  bool attitude_hold = false;
  double solve_ms = 0.0;
  double gradient_ms = 0.0;
};

struct EpisodeLog {
  std::vector<StepRecord> steps;
  bool aborted = false;
  std::string abort_reason;
  int abort_step = -1;

  double MeanLoss() const;
  // RMS of the 3-D position tracking error.
  double TrackingRms() const;
  // RMS over time of |dhat - d| on the given channels (0-5).
  double DisturbanceRms(const std::vector<int>& channels, double t_begin = 0.0,
                        double t_end = std::numeric_limits<double>::infinity()) const;
};

// Per-step data exposed to hooks.
struct StepContext {
  int step = 0;
  double time = 0.0;
  const QuadrotorModel* model = nullptr;
  const MheProblem* problem = nullptr;        // null at step 0
  const HorizonSolution* solution = nullptr;  // null at step 0
  // Step index of the first sample in the current window.
  int window_first_step = 0;
  const EpisodeLog* log = nullptr;
  const ReferenceTrajectory* reference = nullptr;
  const ControlOptions* control_options = nullptr;
};

class EpisodeHooks {
 public:
  virtual ~EpisodeHooks() = default;
  // After the measurement is sampled, before the estimator runs.
  virtual void BeforeEstimate(const StepContext& /*ctx*/, const Vector18& /*measurement*/,
                              ThetaParams& /*theta*/, ControlGains& /*gains*/) {}
  // After the estimate, before the control law.
  virtual void AfterEstimate(const StepContext& /*ctx*/, ThetaParams& /*theta*/,
                             ControlGains& /*gains*/) {}
  // After the truth has been advanced; `record` is this step's log entry.
  virtual void AfterStep(const StepContext& /*ctx*/, StepRecord& /*record*/,
                         ThetaParams& /*theta*/, ControlGains& /*gains*/) {}
};

struct ClosedLoopSetup {
  SimConfig sim;
  QuadrotorParams params;
  ControlGains gains;
  ControlOptions control;
  ThetaParams theta = ThetaParams::Initial();
  MheOptions mhe;
  bool attitude_feedforward = true;
};

// Reference point at t with the desired body rate and angular acceleration
// of the nominal (disturbance-free, zero-error) attitude command filled in by
// central differences in time.
ReferencePoint WithAttitudeFeedforward(const ReferenceTrajectory& reference, double t,
                                       const QuadrotorParams& params);

// Initial true state: at rest at the reference start, yawed to its heading.
Vector24 InitialTruth(const ReferenceTrajectory& reference);

// Runs one episode. Estimator and controller failures abort the episode and
// are recorded in the log rather than thrown.
EpisodeLog RunClosedLoop(const ClosedLoopSetup& setup, const ReferenceTrajectory& reference,
                         const DisturbanceProfile& disturbance, EpisodeHooks* hooks = nullptr);

}  // namespace dmhe

#endif  // DMHE_SCENARIOS_H_
