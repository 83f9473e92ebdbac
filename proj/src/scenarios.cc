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

#include "dmhe/scenarios.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>

#include "dmhe/errors.h"

namespace dmhe {

namespace {

// Quintic smoothstep and its first two derivatives on [0, 1].
Eigen::Vector3d Smoothstep(double u) {
  if (u <= 0.0) return Eigen::Vector3d::Zero();
  if (u >= 1.0) return Eigen::Vector3d(1.0, 0.0, 0.0);
  const double u2 = u * u, u3 = u2 * u;
  return Eigen::Vector3d(u3 * (10.0 - 15.0 * u + 6.0 * u2), 30.0 * u2 * (1.0 - u) * (1.0 - u),
                         60.0 * u * (1.0 - u) * (1.0 - 2.0 * u));
}

double Ms(std::chrono::steady_clock::duration d) {
  return std::chrono::duration<double, std::milli>(d).count();
}

}  // namespace

Eigen::Vector3d Takeoff::Evaluate(double t) const {
  const Eigen::Vector3d s = Smoothstep(t / takeoff_time);
  return Eigen::Vector3d(-altitude * s(0), -altitude * s(1) / takeoff_time,
                         -altitude * s(2) / (takeoff_time * takeoff_time));
}

LemniscateReference::LemniscateReference(LemniscateConfig config) : config_(config) {
  if (!(config_.scale > 0.0 && config_.period > 0.0 && config_.ramp_time > 0.0 &&
        config_.takeoff.takeoff_time > 0.0)) {
    throw std::invalid_argument("LemniscateReference: sizes and durations must be positive");
  }
}

Eigen::Vector3d LemniscateReference::Phase(double t) const {
  const double omega = 2.0 * M_PI / config_.period;
  const double tr = config_.ramp_time;
  const double tau = t - config_.takeoff.takeoff_time;
  if (tau <= 0.0) return Eigen::Vector3d::Zero();
  if (tau >= tr) return Eigen::Vector3d(omega * (0.5 * tr + (tau - tr)), omega, 0.0);
  const double u = tau / tr;
  const double u4 = u * u * u * u;
  const Eigen::Vector3d s = Smoothstep(u);
  // Integral of the smoothstep: 2.5 u^4 - 3 u^5 + u^6.
  return Eigen::Vector3d(omega * tr * u4 * (2.5 - 3.0 * u + u * u), omega * s(0),
                         omega * s(1) / tr);
}

ReferencePoint LemniscateReference::At(double t) const {
  const double a = config_.scale;
  const Eigen::Vector3d ph = Phase(t);
  const double phi = ph(0), dphi = ph(1), ddphi = ph(2);
  const double s1 = std::sin(phi), c1 = std::cos(phi);
  const double s2 = std::sin(2.0 * phi), c2 = std::cos(2.0 * phi);
  const Eigen::Vector3d z = config_.takeoff.Evaluate(t);

  ReferencePoint ref;
  ref.position = Eigen::Vector3d(a * s1, 0.5 * a * s2, z(0));
  ref.velocity = Eigen::Vector3d(a * c1 * dphi, a * c2 * dphi, z(1));
  ref.acceleration = Eigen::Vector3d(-a * s1 * dphi * dphi + a * c1 * ddphi,
                                     -2.0 * a * s2 * dphi * dphi + a * c2 * ddphi, z(2));
  if (config_.heading == HeadingMode::kTangent) {
    ref.heading = Eigen::Vector3d(c1, c2, 0.0).normalized();
  } else {
    ref.heading = Eigen::Vector3d::UnitX();
  }
  return ref;
}

HoverReference::HoverReference(Takeoff takeoff, Eigen::Vector3d heading)
    : takeoff_(takeoff), heading_(heading.normalized()) {}

ReferencePoint HoverReference::At(double t) const {
  const Eigen::Vector3d z = takeoff_.Evaluate(t);
  ReferencePoint ref;
  ref.position.z() = z(0);
  ref.velocity.z() = z(1);
  ref.acceleration.z() = z(2);
  ref.heading = heading_;
  return ref;
}

// ---------------------------------------------------------------------------

double SquareWave(double t, double period) {
  const double r = std::fmod(t, period);
  return (r < 0.5 * period) ? 1.0 : -1.0;
}

double GroundEffectLift(const DisturbanceComponent& c, double height, double thrust) {
  if (height >= c.ground_ceiling || thrust <= 0.0) return 0.0;
  const double h = std::max(height, c.ground_min_height);
  const double rho = c.ground_coeff / (4.0 * h);
  const double extra = thrust * (1.0 / (1.0 - rho * rho) - 1.0);
  return std::min(extra, c.ground_cap * thrust);
}

DisturbanceProfile::DisturbanceProfile(std::vector<DisturbanceComponent> components) {
  for (const auto& c : components) Add(c);
}

void DisturbanceProfile::Add(const DisturbanceComponent& c) {
  if (c.channel < 0 || c.channel > 5) {
    throw std::invalid_argument("DisturbanceComponent: channel must be in [0, 5]");
  }
  if ((c.kind == DisturbanceKind::kSquareWave || c.kind == DisturbanceKind::kSinusoid) &&
      !(c.period > 0.0)) {
    throw std::invalid_argument("DisturbanceComponent: period must be positive");
  }
  if (c.kind == DisturbanceKind::kGroundEffect &&
      !(c.ground_min_height > c.ground_coeff / 4.0 && c.ground_cap > 0.0)) {
    throw std::invalid_argument("DisturbanceComponent: ground-effect model is singular");
  }
  components_.push_back(c);
  std::vector<Harmonic> h;
  if (c.kind == DisturbanceKind::kDownwash && c.fluctuation > 0.0) {
    std::mt19937_64 rng(c.fluctuation_seed);
    std::uniform_real_distribution<double> freq(0.3, 2.0), phase(0.0, 2.0 * M_PI);
    constexpr int kHarmonics = 8;
    const double amp = c.fluctuation * std::sqrt(2.0 / kHarmonics);
    for (int i = 0; i < kHarmonics; ++i) h.push_back({amp, freq(rng), phase(rng)});
  }
  harmonics_.push_back(std::move(h));
}

Vector6 DisturbanceProfile::Evaluate(double t, const Vector24& state, double thrust) const {
  Vector6 d = Vector6::Zero();
  for (size_t i = 0; i < components_.size(); ++i) {
    const DisturbanceComponent& c = components_[i];
    if (t < c.start_time || t >= c.end_time) continue;
    const double tau = t - c.start_time;
    double v = c.offset;
    switch (c.kind) {
      case DisturbanceKind::kSquareWave:
        v += c.amplitude * SquareWave(tau, c.period);
        break;
      case DisturbanceKind::kSinusoid:
        v += c.amplitude * std::sin(2.0 * M_PI * tau / c.period);
        break;
      case DisturbanceKind::kGroundEffect:
        // Upward lift is negative z in NED.
        v -= GroundEffectLift(c, -state(state::kPos + 2), thrust);
        break;
      case DisturbanceKind::kPayloadRelease:
        v += c.amplitude;
        break;
      case DisturbanceKind::kDownwash: {
        const double onset = Smoothstep(tau / c.rise_time)(0);
        double f = c.amplitude;
        for (const Harmonic& h : harmonics_[i]) {
          f += h.amplitude * std::sin(2.0 * M_PI * h.frequency * tau + h.phase);
        }
        v += onset * f;
        break;
      }
    }
    d(c.channel) += v;
  }
  return d;
}

DisturbanceProfile DisturbanceProfile::PayloadRelease(double weight, double release_time,
                                                      bool ground_effect) {
  DisturbanceProfile p;
  DisturbanceComponent c;
  c.kind = DisturbanceKind::kPayloadRelease;
  c.channel = 2;
  c.amplitude = weight;
  c.end_time = release_time;
  p.Add(c);
  if (ground_effect) {
    DisturbanceComponent g;
    g.kind = DisturbanceKind::kGroundEffect;
    g.channel = 2;
    p.Add(g);
  }
  return p;
}

DisturbanceProfile DisturbanceProfile::Downwash(double magnitude, double onset,
                                                double fluctuation, bool ground_effect) {
  DisturbanceProfile p;
  DisturbanceComponent c;
  c.kind = DisturbanceKind::kDownwash;
  c.channel = 2;
  c.amplitude = magnitude;
  c.start_time = onset;
  c.fluctuation = fluctuation;
  p.Add(c);
  if (ground_effect) {
    DisturbanceComponent g;
    g.kind = DisturbanceKind::kGroundEffect;
    g.channel = 2;
    p.Add(g);
  }
  return p;
}

DisturbanceProfile DisturbanceProfile::Composite() {
  DisturbanceProfile p;
  DisturbanceComponent c;
  c.kind = DisturbanceKind::kGroundEffect;
  c.channel = 2;
  p.Add(c);

  c = DisturbanceComponent{};
  c.kind = DisturbanceKind::kSquareWave;
  c.channel = 2;
  c.amplitude = 2.0;
  c.period = 4.0;
  c.start_time = 2.0;
  p.Add(c);

  c = DisturbanceComponent{};
  c.kind = DisturbanceKind::kSinusoid;
  c.channel = 0;
  c.amplitude = 1.5;
  c.period = 5.0;
  p.Add(c);

  c = DisturbanceComponent{};
  c.kind = DisturbanceKind::kSquareWave;
  c.channel = 1;
  c.amplitude = 1.0;
  c.period = 6.0;
  c.start_time = 1.0;
  p.Add(c);

  c = DisturbanceComponent{};
  c.kind = DisturbanceKind::kSinusoid;
  c.channel = 5;
  c.amplitude = 0.02;
  c.period = 4.0;
  p.Add(c);

  c = DisturbanceComponent{};
  c.kind = DisturbanceKind::kSquareWave;
  c.channel = 3;
  c.amplitude = 0.02;
  c.period = 5.0;
  c.start_time = 2.0;
  p.Add(c);
  return p;
}

// ---------------------------------------------------------------------------

int SimConfig::steps() const { return static_cast<int>(std::lround(duration / dt)); }

int SimConfig::substeps() const { return static_cast<int>(std::lround(dt / sim_dt)); }

void SimConfig::Validate() const {
  if (!(dt > 0.0 && sim_dt > 0.0 && duration > 0.0)) {
    throw std::invalid_argument("SimConfig: dt, sim_dt and duration must be positive");
  }
  if (std::abs(substeps() * sim_dt - dt) > 1e-12 * dt || substeps() < 1) {
    throw std::invalid_argument("SimConfig: dt must be an integer multiple of sim_dt");
  }
  if (!(measurement_variance >= 0.0 && process_variance >= 0.0)) {
    throw std::invalid_argument("SimConfig: variances must be non-negative");
  }
  if (horizon < 2) throw std::invalid_argument("SimConfig: horizon must be >= 2");
}

double EpisodeLog::MeanLoss() const {
  if (steps.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : steps) s += r.loss;
  return s / static_cast<double>(steps.size());
}

double EpisodeLog::TrackingRms() const {
  if (steps.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : steps) {
    s += (r.truth.segment<3>(state::kPos) - r.reference.position).squaredNorm();
  }
  return std::sqrt(s / static_cast<double>(steps.size()));
}

double EpisodeLog::DisturbanceRms(const std::vector<int>& channels, double t_begin,
                                  double t_end) const {
  double s = 0.0;
  int n = 0;
  for (const auto& r : steps) {
    if (r.time < t_begin || r.time >= t_end) continue;
    for (int c : channels) {
      const double e = r.estimate(state::kForce + c) - r.truth(state::kForce + c);
      s += e * e;
    }
    ++n;
  }
  return n == 0 ? 0.0 : std::sqrt(s / n);
}

namespace {

Eigen::Matrix3d NominalAttitude(const ReferencePoint& ref, const QuadrotorParams& params) {
  const Eigen::Vector3d t =
      params.mass * (params.gravity * Eigen::Vector3d::UnitZ() - ref.acceleration);
  const Eigen::Vector3d b3 = t.normalized();
  const Eigen::Vector3d b2 = b3.cross(ref.heading).normalized();
  Eigen::Matrix3d rd;
  rd << b2.cross(b3), b2, b3;
  return rd;
}

Eigen::Vector3d NominalRate(const ReferenceTrajectory& reference, double t,
                            const QuadrotorParams& params) {
  constexpr double kH = 1e-5;
  const Eigen::Matrix3d rd = NominalAttitude(reference.At(t), params);
  const Eigen::Matrix3d rd_dot = (NominalAttitude(reference.At(t + kH), params) -
                                  NominalAttitude(reference.At(t - kH), params)) /
                                 (2.0 * kH);
  const Eigen::Matrix3d w = rd.transpose() * rd_dot;
  return 0.5 * Eigen::Vector3d(w(2, 1) - w(1, 2), w(0, 2) - w(2, 0), w(1, 0) - w(0, 1));
}

}  // namespace

ReferencePoint WithAttitudeFeedforward(const ReferenceTrajectory& reference, double t,
                                       const QuadrotorParams& params) {
  constexpr double kH = 1e-3;
  ReferencePoint ref = reference.At(t);
  ref.angular_velocity = NominalRate(reference, t, params);
  ref.angular_acceleration =
      (NominalRate(reference, t + kH, params) - NominalRate(reference, t - kH, params)) /
      (2.0 * kH);
  return ref;
}

Vector24 InitialTruth(const ReferenceTrajectory& reference) {
  const ReferencePoint ref = reference.At(0.0);
  Vector24 x = HoverState(ref.position);
  const double yaw = std::atan2(ref.heading.y(), ref.heading.x());
  SetRotation(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix(), x);
  return x;
}

EpisodeLog RunClosedLoop(const ClosedLoopSetup& setup, const ReferenceTrajectory& reference,
                         const DisturbanceProfile& disturbance, EpisodeHooks* hooks) {
  const SimConfig& sim = setup.sim;
  sim.Validate();
  setup.gains.Validate();
  const QuadrotorModel model(setup.params, sim.dt);
  const MheSolver solver(model, setup.mhe);
  const QuadrotorParams& params = setup.params;

  std::mt19937_64 rng(sim.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double meas_std = std::sqrt(sim.measurement_variance);
  const double proc_std = std::sqrt(sim.process_variance);

  ThetaParams theta = setup.theta;
  ControlGains gains = setup.gains;
  EpisodeLog log;
  const int steps = sim.steps();
  log.steps.reserve(steps);

  Vector24 truth = InitialTruth(reference);
  truth.segment<6>(state::kForce) = disturbance.Evaluate(0.0, truth, 0.0);
  MovingWindow window(sim.horizon, Eigen::VectorXd());
  HorizonSolution previous;
  MheProblem problem;
  bool have_solution = false;
  ControlCommand last_command;
  last_command.input.u.setConstant(params.HoverMotorInput());
  last_command.wrench = last_command.input.Wrench(params);
  int window_first = 0;

  StepContext ctx;
  ctx.model = &model;
  ctx.log = &log;
  ctx.reference = &reference;
  ctx.control_options = &setup.control;

  for (int t = 0; t < steps; ++t) {
    const double time = t * sim.dt;
    StepRecord rec;
    rec.step = t;
    rec.time = time;
    rec.reference = setup.attitude_feedforward ? WithAttitudeFeedforward(reference, time, params)
                                               : reference.At(time);
    rec.truth = truth;

    // Measurement noise is drawn before process noise, every step.
    Vector18 y = Measure(truth);
    for (int i = 0; i < state::kMeasDim; ++i) y(i) += meas_std * normal(rng);
    rec.measurement = y;
    ctx.step = t;
    ctx.time = time;
    ctx.problem = nullptr;
    ctx.solution = nullptr;
    ctx.window_first_step = window_first;
    if (hooks != nullptr) hooks->BeforeEstimate(ctx, y, theta, gains);

    try {
      const auto t0 = std::chrono::steady_clock::now();
      if (t == 0) {
        Eigen::VectorXd guess = Eigen::VectorXd::Zero(state::kDim);
        guess.head<state::kMeasDim>() = y;
        window = MovingWindow(sim.horizon, guess);
        window.Start(y);
        rec.estimate = guess;
      } else {
        problem = window.Advance(y, last_command.input.u, have_solution ? &previous : nullptr,
                                 theta);
        window_first = t + 1 - window.size();
        HorizonSolution sol;
        if (have_solution) {
          const auto guess = window.WarmStart(previous, model);
          sol = solver.Solve(problem, guess.first, guess.second);
        } else {
          sol = solver.Solve(problem);
        }
        previous = std::move(sol);
        have_solution = true;
        rec.estimate = previous.Latest();
        rec.mhe_iterations = previous.iterations;
        rec.kkt_residual = previous.kkt_residual;
        rec.mhe_converged = previous.converged();
        ctx.problem = &problem;
        ctx.solution = &previous;
        ctx.window_first_step = window_first;
      }
      rec.solve_ms = Ms(std::chrono::steady_clock::now() - t0);
      if (!rec.estimate.allFinite()) throw NonFiniteError(t, "estimate");

      if (hooks != nullptr) hooks->AfterEstimate(ctx, theta, gains);
      gains.Validate();

      try {
        last_command = ComputeControl(rec.reference, rec.estimate, gains, params, setup.control);
      } catch (const DegenerateAttitudeError&) {
        rec.attitude_hold = true;  // keep the previous command
      }
    } catch (const std::exception& e) {
      log.aborted = true;
      log.abort_reason = e.what();
      log.abort_step = t;
      rec.theta = theta.values();
      log.steps.push_back(rec);
      return log;
    }
    rec.control = last_command.input.u;
    rec.wrench = last_command.input.Wrench(params);
    rec.clamped_motors = last_command.clamped_motors;
    rec.theta = theta.values();
    rec.gains << gains.kp, gains.kv;

    Vector6 noise;
    for (int i = 0; i < 6; ++i) noise(i) = proc_std * normal(rng);
    rec.process_noise = noise;

    if (sim.truth == TruthModel::kEuler) {
      truth.segment<6>(state::kForce) = disturbance.Evaluate(time, truth, rec.wrench(0)) + noise;
      truth = EulerStep(truth, last_command.input, Vector6::Zero(), sim.dt, params);
    } else {
      for (int s = 0; s < sim.substeps(); ++s) {
        const double ts = time + s * sim.sim_dt;
        const Vector6 d = disturbance.Evaluate(ts, truth, rec.wrench(0)) + noise;
        truth = Rk4Step(truth, last_command.input, d, sim.sim_dt, params);
      }
    }
    if (sim.ground_contact && truth(state::kPos + 2) > 0.0) {
      truth(state::kPos + 2) = 0.0;
      truth(state::kVel + 2) = std::min(truth(state::kVel + 2), 0.0);
    }
    // Disturbance slots of the logged truth hold the profile value at the
    // next sample time.
    truth.segment<6>(state::kForce) =
        disturbance.Evaluate(time + sim.dt, truth, rec.wrench(0));

    if (hooks != nullptr) {
      try {
        hooks->AfterStep(ctx, rec, theta, gains);
      } catch (const std::exception& e) {
        log.aborted = true;
        log.abort_reason = e.what();
        log.abort_step = t;
        log.steps.push_back(rec);
        return log;
      }
    }
    log.steps.push_back(rec);

    if (!truth.allFinite() || Position(truth).norm() > sim.divergence_radius) {
      log.aborted = true;
      log.abort_reason = "true state diverged";
      log.abort_step = t;
      return log;
    }
  }
  return log;
}

}  // namespace dmhe
