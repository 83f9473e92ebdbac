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

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "test_util.h"

namespace dmhe {
namespace {

using Eigen::Vector3d;
using testing::MaxRelativeError;

TEST(ReferenceTest, StartsAtRestOnTheGround) {
  const LemniscateReference lem{LemniscateConfig{}};
  const ReferencePoint r = lem.At(0.0);
  EXPECT_EQ(r.position, Vector3d::Zero());
  EXPECT_EQ(r.velocity, Vector3d::Zero());
  EXPECT_EQ(r.acceleration, Vector3d::Zero());
  EXPECT_NEAR(r.heading.norm(), 1.0, 1e-15);
}

TEST(ReferenceTest, DerivativesMatchFiniteDifferences) {
  for (HeadingMode mode : {HeadingMode::kFixed, HeadingMode::kTangent}) {
    LemniscateConfig config;
    config.heading = mode;
    const LemniscateReference lem(config);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> time(0.1, 20.0);
    for (int trial = 0; trial < 200; ++trial) {
      const double t = time(rng);
      const double h = 1e-5;
      const ReferencePoint a = lem.At(t + h), b = lem.At(t - h), r = lem.At(t);
      const Vector3d v_fd = (a.position - b.position) / (2.0 * h);
      const Vector3d a_fd = (a.velocity - b.velocity) / (2.0 * h);
      EXPECT_LT(MaxRelativeError(r.velocity, v_fd, 1e-3), 1e-6) << "t=" << t;
      EXPECT_LT(MaxRelativeError(r.acceleration, a_fd, 1e-3), 1e-6) << "t=" << t;
      EXPECT_NEAR(r.heading.norm(), 1.0, 1e-12);
    }
  }
}

TEST(ReferenceTest, PeriodIsExactAfterTheRamp) {
  LemniscateConfig config;
  const LemniscateReference lem(config);
  const double t0 = config.takeoff.takeoff_time + config.ramp_time;
  for (double t = t0; t < t0 + 10.0; t += 0.37) {
    const ReferencePoint a = lem.At(t), b = lem.At(t + config.period);
    EXPECT_LT((a.position - b.position).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((a.velocity - b.velocity).cwiseAbs().maxCoeff(), 1e-12);
  }
  // The phase rate reaches exactly 2 pi / period.
  const double w = lem.Phase(t0 + 1.0)(1);
  EXPECT_DOUBLE_EQ(w, 2.0 * M_PI / config.period);
}

TEST(ReferenceTest, TakeoffReachesAltitudeSmoothly) {
  const Takeoff takeoff;
  const Vector3d start = takeoff.Evaluate(0.0), end = takeoff.Evaluate(takeoff.takeoff_time);
  EXPECT_EQ(start, Vector3d::Zero());
  EXPECT_DOUBLE_EQ(end(0), -takeoff.altitude);
  EXPECT_NEAR(end(1), 0.0, 1e-15);
  EXPECT_NEAR(end(2), 0.0, 1e-15);
}

TEST(ReferenceTest, AttitudeFeedforwardVanishesInHover) {
  const HoverReference hover(Takeoff{});
  const ReferencePoint r = WithAttitudeFeedforward(hover, 5.0, QuadrotorParams{});
  EXPECT_LT(r.angular_velocity.norm(), 1e-9);
  EXPECT_LT(r.angular_acceleration.norm(), 1e-6);
}

TEST(ReferenceTest, AttitudeFeedforwardIsTheNominalRate) {
  // Along a straight constant-acceleration-free line the nominal attitude is
  // level; on the lemniscate the pitch/roll rates follow the jerk.
  const LemniscateReference lem{LemniscateConfig{}};
  const QuadrotorParams params;
  const ReferencePoint r = WithAttitudeFeedforward(lem, 7.3, params);
  EXPECT_GT(r.angular_velocity.head<2>().norm(), 1e-2);
  // Fixed heading along a horizontal path gives no yaw about b3 to first order.
  EXPECT_LT(std::abs(r.angular_velocity(2)), 0.1 * r.angular_velocity.head<2>().norm());
}

TEST(DisturbanceTest, PayloadRelease) {
  const DisturbanceProfile payload = DisturbanceProfile::PayloadRelease(5.87, 20.5, false);
  const Vector24 x = HoverState(Vector3d(0, 0, -1.5));
  EXPECT_DOUBLE_EQ(payload.Evaluate(20.0, x, 5.0)(2), 5.87);
  EXPECT_DOUBLE_EQ(payload.Evaluate(21.0, x, 5.0)(2), 0.0);
  EXPECT_EQ(payload.Evaluate(20.0, x, 5.0).head<2>(), Eigen::Vector2d::Zero());
}

TEST(DisturbanceTest, SinusoidStartsAtZero) {
  DisturbanceComponent c;
  c.kind = DisturbanceKind::kSinusoid;
  c.channel = 0;
  c.amplitude = 3.0;
  c.period = 2.0;
  const DisturbanceProfile d({c});
  EXPECT_EQ(d.Evaluate(0.0, HoverState(), 0.0)(0), 0.0);
  EXPECT_NEAR(d.Evaluate(0.5, HoverState(), 0.0)(0), 3.0, 1e-12);
}

TEST(DisturbanceTest, SquareWaveHasZeroMeanOverAPeriod) {
  const double period = 3.0;
  const int n = 3000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += SquareWave(i * period / n, period);
  EXPECT_EQ(sum, 0.0);
  EXPECT_EQ(SquareWave(0.2, period), 1.0);
  EXPECT_EQ(SquareWave(1.7, period), -1.0);
}

TEST(DisturbanceTest, GroundEffectIsAboutTwoNewtonsAtTwentyCentimetres) {
  const QuadrotorParams params;
  const double hover_thrust = params.mass * params.gravity;
  DisturbanceComponent c;
  c.kind = DisturbanceKind::kGroundEffect;
  const double lift = GroundEffectLift(c, 0.2, hover_thrust);
  EXPECT_GT(lift, 1.5);
  EXPECT_LT(lift, 2.5);
  EXPECT_EQ(GroundEffectLift(c, 1.2, hover_thrust), 0.0);
  EXPECT_LE(GroundEffectLift(c, 0.0, hover_thrust), c.ground_cap * hover_thrust);
  // Lift decreases with height.
  EXPECT_GT(GroundEffectLift(c, 0.3, hover_thrust), GroundEffectLift(c, 0.6, hover_thrust));
  // Upward lift appears as negative z force in NED.
  const DisturbanceProfile d({c});
  EXPECT_NEAR(d.Evaluate(1.0, HoverState(Vector3d(0, 0, -0.2)), hover_thrust)(2), -lift, 1e-15);
}

TEST(DisturbanceTest, DownwashPlateauAndDeterminism) {
  const DisturbanceProfile a = DisturbanceProfile::Downwash(4.0, 8.0, 0.5, false);
  const DisturbanceProfile b = DisturbanceProfile::Downwash(4.0, 8.0, 0.5, false);
  const Vector24 x = HoverState(Vector3d(0, 0, -1.5));
  EXPECT_EQ(a.Evaluate(7.99, x, 5.0), Vector6::Zero());
  double sum = 0.0;
  int n = 0;
  for (double t = 10.0; t < 110.0; t += 0.01, ++n) {
    const double v = a.Evaluate(t, x, 5.0)(2);
    EXPECT_EQ(v, b.Evaluate(t, x, 5.0)(2));
    EXPECT_GT(v, 4.0 - 0.5 * 4.0);
    EXPECT_LT(v, 4.0 + 0.5 * 4.0);
    sum += v;
  }
  EXPECT_NEAR(sum / n, 4.0, 0.1);
}

TEST(DisturbanceTest, CompositeIsBounded) {
  const DisturbanceProfile d = DisturbanceProfile::Composite();
  const QuadrotorParams params;
  for (double t = 0.0; t < 20.0; t += 0.013) {
    for (double z : {0.0, -0.1, -0.5, -1.5}) {
      const Vector6 v = d.Evaluate(t, HoverState(Vector3d(0, 0, z)), params.mass * params.gravity);
      EXPECT_TRUE(v.allFinite());
      EXPECT_LT(v.head<3>().cwiseAbs().maxCoeff(), 10.0);
      EXPECT_LT(v.tail<3>().cwiseAbs().maxCoeff(), 0.1);
    }
  }
}

TEST(DisturbanceTest, RejectsBadComponents) {
  DisturbanceComponent c;
  c.channel = 6;
  EXPECT_THROW(DisturbanceProfile({c}), std::invalid_argument);
  c.channel = 0;
  c.period = 0.0;
  EXPECT_THROW(DisturbanceProfile({c}), std::invalid_argument);
}

TEST(SimConfigTest, DefaultsSubdivideExactly) {
  const SimConfig config;
  config.Validate();
  EXPECT_EQ(config.steps(), 1571);
  EXPECT_EQ(config.substeps(), 2);
  SimConfig bad;
  bad.sim_dt = 0.003;
  EXPECT_THROW(bad.Validate(), std::invalid_argument);
}

ClosedLoopSetup QuietSetup() {
  ClosedLoopSetup setup;
  setup.sim.measurement_variance = 0.0;
  setup.sim.process_variance = 0.0;
  return setup;
}

TEST(ClosedLoopTest, NoiselessTrackingIsSubMillimetre) {
  const LemniscateReference lem{LemniscateConfig{}};
  const EpisodeLog log = RunClosedLoop(QuietSetup(), lem, DisturbanceProfile::None());
  ASSERT_FALSE(log.aborted) << log.abort_reason;
  EXPECT_EQ(static_cast<int>(log.steps.size()), 1571);
  EXPECT_LT(log.TrackingRms(), 1e-3);
  for (const StepRecord& r : log.steps) {
    EXPECT_EQ(r.clamped_motors, 0);
    EXPECT_TRUE(r.mhe_converged);
  }
}

TEST(ClosedLoopTest, SeededRunsAreBitIdentical) {
  ClosedLoopSetup setup;
  setup.sim.duration = 2.0;
  setup.sim.seed = 11;
  const LemniscateReference lem{LemniscateConfig{}};
  const DisturbanceProfile d = DisturbanceProfile::Composite();
  const EpisodeLog a = RunClosedLoop(setup, lem, d);
  const EpisodeLog b = RunClosedLoop(setup, lem, d);
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (size_t i = 0; i < a.steps.size(); ++i) {
    EXPECT_EQ(a.steps[i].truth, b.steps[i].truth);
    EXPECT_EQ(a.steps[i].estimate, b.steps[i].estimate);
    EXPECT_EQ(a.steps[i].control, b.steps[i].control);
  }
  setup.sim.seed = 12;
  const EpisodeLog c = RunClosedLoop(setup, lem, d);
  EXPECT_NE(a.steps.back().truth, c.steps.back().truth);
}

TEST(ClosedLoopTest, NoiseStreamsHaveTheConfiguredVariance) {
  ClosedLoopSetup setup;
  setup.sim.duration = 5.0;
  const HoverReference hover(Takeoff{});
  const EpisodeLog log = RunClosedLoop(setup, hover, DisturbanceProfile::None());
  ASSERT_FALSE(log.aborted);
  double meas = 0.0, proc = 0.0;
  for (const StepRecord& r : log.steps) {
    meas += (r.measurement - Measure(r.truth)).squaredNorm();
    proc += r.process_noise.squaredNorm();
  }
  const double n = static_cast<double>(log.steps.size());
  EXPECT_NEAR(meas / (18.0 * n), 1e-6, 1e-7);
  EXPECT_NEAR(proc / (6.0 * n), 1e-2, 1e-3);
}

class CountingHooks : public EpisodeHooks {
 public:
  void BeforeEstimate(const StepContext& ctx, const Vector18&, ThetaParams&,
                      ControlGains&) override {
    EXPECT_EQ(ctx.step, before_);
    ++before_;
  }
  void AfterEstimate(const StepContext& ctx, ThetaParams&, ControlGains&) override {
    EXPECT_EQ(ctx.step + 1, before_);
    if (ctx.step > 0) {
      ASSERT_NE(ctx.solution, nullptr);
      EXPECT_EQ(ctx.window_first_step + ctx.problem->horizon() - 1, ctx.step);
    }
    ++after_;
  }
  void AfterStep(const StepContext&, StepRecord& record, ThetaParams&,
                 ControlGains&) override {
    record.loss = 1.0;
    ++steps_;
  }
  int before_ = 0, after_ = 0, steps_ = 0;
};

TEST(ClosedLoopTest, HooksRunInOrder) {
  ClosedLoopSetup setup;
  setup.sim.duration = 0.5;
  const HoverReference hover(Takeoff{});
  CountingHooks hooks;
  const EpisodeLog log = RunClosedLoop(setup, hover, DisturbanceProfile::None(), &hooks);
  EXPECT_EQ(hooks.before_, 50);
  EXPECT_EQ(hooks.after_, 50);
  EXPECT_EQ(hooks.steps_, 50);
  EXPECT_DOUBLE_EQ(log.MeanLoss(), 1.0);
}

TEST(ClosedLoopTest, DivergenceAbortsWithPartialLog) {
  ClosedLoopSetup setup;
  setup.sim.divergence_radius = 0.5;
  DisturbanceComponent push;
  push.kind = DisturbanceKind::kSinusoid;
  push.channel = 0;
  push.offset = 30.0;  // far beyond the lateral authority
  const HoverReference hover(Takeoff{});
  const EpisodeLog log = RunClosedLoop(setup, hover, DisturbanceProfile({push}));
  EXPECT_TRUE(log.aborted);
  EXPECT_FALSE(log.abort_reason.empty());
  EXPECT_EQ(static_cast<int>(log.steps.size()), log.abort_step + 1);
  EXPECT_LT(log.abort_step, setup.sim.steps());
}

TEST(ClosedLoopTest, GroundStopsADescent) {
  ClosedLoopSetup setup;
  setup.sim.duration = 1.0;
  const HoverReference hover(Takeoff{});
  const EpisodeLog log =
      RunClosedLoop(setup, hover, DisturbanceProfile::PayloadRelease(5.87, 100.0, false));
  for (const StepRecord& r : log.steps) EXPECT_LE(r.truth(state::kPos + 2), 0.0);
}

TEST(ClosedLoopTest, HoverHoldsUnderConstantForceWithFeedforward) {
  ClosedLoopSetup setup;
  setup.sim.duration = 8.0;
  setup.theta = ThetaParams::Initial(0.9, 0.8);
  const HoverReference hover(Takeoff{});
  const EpisodeLog log =
      RunClosedLoop(setup, hover, DisturbanceProfile::PayloadRelease(5.87, 100.0, false));
  ASSERT_FALSE(log.aborted);
  const StepRecord& last = log.steps.back();
  EXPECT_LT((Position(last.truth) - last.reference.position).norm(), 0.02);
  EXPECT_NEAR(last.estimate(state::kForce + 2), 5.87, 0.3);
}

}  // namespace
}  // namespace dmhe
