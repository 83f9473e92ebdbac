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

#ifndef DMHE_LEARNING_H_
#define DMHE_LEARNING_H_

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "dmhe/control.h"
#include "dmhe/dmhe_gradient.h"
#include "dmhe/kkt_recursion.h"
#include "dmhe/rigid_body.h"
#include "dmhe/scenarios.h"
#include "dmhe/weights.h"

namespace dmhe {

// ---------------------------------------------------------------------------
// Tracking loss L = sum_k w_k |x_k - x_k^ref|^2_kappa over the quadrotor state
// (first 18 entries), with w = softmax(beta * k).

struct LossConfig {
  Vector18 kappa = DefaultKappa();
  double beta = 0.0;

  // Position 1, velocity 0.1, attitude and rate 0.
  static Vector18 DefaultKappa();
  void Validate() const;
};

struct TrackingLoss {
  std::vector<double> stage_losses;        // l_k
  std::vector<double> weights;             // w_k, sum to one
  double total = 0.0;                      // L
  std::vector<Eigen::VectorXd> gradient;   // dL/dx_k, full state length
};

// Quadrotor reference state: p_d, v_d, the heading-only attitude and the
// desired body rate.
Vector18 ReferenceState(const ReferencePoint& ref);

// `states` may be full 24-vectors or 18-vectors; gradients have the same
// length as the states. Throws std::invalid_argument on size mismatch.
TrackingLoss EvaluateTrackingLoss(const std::vector<Eigen::VectorXd>& states,
                                  const std::vector<Vector18>& references,
                                  const LossConfig& config);

// dL/dtheta = sum_k dL/dx_k X_k.
Eigen::RowVectorXd ChainRuleDirect(const TrackingLoss& loss, const GradientTrajectory& sens);

// ---------------------------------------------------------------------------
// Closed-loop chain rule. The feedback state s = [p, v] is propagated by a
// zero-order-hold translational model
//   p+ = p + dt v + dt^2 / 2 a,  v+ = v + dt a,  a = g e3 + (d - f R e3) / m,
// with f = b sum(u) and the attitude R taken from the feedback.

struct TranslationalModel {
  QuadrotorParams params;
  double dt = 0.01;

  Vector6 Step(const Vector6& s, const Eigen::Vector4d& u, const Eigen::Matrix3d& attitude,
               const Eigen::Vector3d& force) const;
  Eigen::Matrix<double, 6, 6> StateJacobian() const;
  Eigen::Matrix<double, 6, 4> ControlJacobian(const Eigen::Matrix3d& attitude) const;
};

// One control stage of the rollout: u_k = u(ref_k, xhat_k(theta), gains).
struct ClosedLoopStage {
  Eigen::Matrix<double, 4, 24> du_dx = Eigen::Matrix<double, 4, 24>::Zero();
  Eigen::Matrix<double, 4, 6> du_dgains = Eigen::Matrix<double, 4, 6>::Zero();
  Eigen::Matrix3d attitude = Eigen::Matrix3d::Identity();
  int estimate_stage = 0;  // index of the sensitivity X_{k|N} feeding u_k
};

struct ClosedLoopGradient {
  Eigen::RowVectorXd theta;
  Eigen::Matrix<double, 1, 6> gains = Eigen::Matrix<double, 1, 6>::Zero();  // [kp, kv]
};

// Gradient of L(s_1..s_K) for s_{k+1} = fbar(s_k, u_k), k = 0..K-1:
//   dL/dtheta = sum_k mu_{k+1} dfbar/du du_k/dx X_{k|N},
// where mu_{k+1} = dL/ds_{k+1} + dfbar/ds^T mu_{k+2} is the total derivative
// through later feedback states. `loss_gradient[k]` is the partial dL/ds_{k+1}
// (6 entries). Throws std::invalid_argument when a stage refers to a missing
// sensitivity.
ClosedLoopGradient ChainRuleClosedLoop(const std::vector<Vector6>& loss_gradient,
                                       const std::vector<ClosedLoopStage>& stages,
                                       const GradientTrajectory& sens,
                                       const TranslationalModel& fbar);

// ---------------------------------------------------------------------------
// Small policy network: inputs -> hidden (PReLU, learnable per-unit slope)
// -> outputs (sigmoid).

class MlpPolicy {
 public:
  MlpPolicy() = default;
  MlpPolicy(int inputs, int hidden, int outputs, std::uint64_t seed);

  int inputs() const { return static_cast<int>(w1_.cols()); }
  int hidden() const { return static_cast<int>(w1_.rows()); }
  int outputs() const { return static_cast<int>(w2_.rows()); }
  int ParameterCount() const;

  Eigen::VectorXd Forward(const Eigen::VectorXd& input) const;

  // Gradient of upstream . Forward(input) w.r.t. the flat parameters.
  Eigen::VectorXd Backward(const Eigen::VectorXd& input, const Eigen::VectorXd& upstream) const;

  // Flat order: w1 (row-major), b1, slope, w2 (row-major), b2.
  Eigen::VectorXd Parameters() const;
  void SetParameters(const Eigen::VectorXd& params);

  // b2 = logit(ratios), ratios in (0, 1). Together with ZeroOutputWeights
  // the network then returns `ratios` for every input.
  void SetOutputBias(const Eigen::VectorXd& ratios);
  void ZeroOutputWeights();

 private:
  Eigen::MatrixXd w1_;
  Eigen::VectorXd b1_;
  Eigen::VectorXd slope_;
  Eigen::MatrixXd w2_;
  Eigen::VectorXd b2_;
};

inline constexpr double kPreluInitialSlope = 0.25;

// Adaptive-moment first-order optimizer.
class Adam {
 public:
  Adam(int size, double learning_rate, double epsilon = 1e-8, double beta1 = 0.9,
       double beta2 = 0.999);
  void Step(Eigen::VectorXd& params, const Eigen::VectorXd& gradient);
  int steps() const { return t_; }

 private:
  double lr_, eps_, beta1_, beta2_;
  Eigen::VectorXd m_, v_;
  int t_ = 0;
};

// ---------------------------------------------------------------------------
// Training.

enum class ChainRule {
  kDirect,      // loss on the window estimates, dL/dtheta = sum dL/dx X
  kClosedLoop,  // loss on the measured feedback, routed through the controller
};

struct TrainingConfig {
  ChainRule chain_rule = ChainRule::kDirect;
  LossConfig loss;
  LearningRates rates;
  double gamma_min = kDefaultGammaMin;
  std::vector<int> mask;  // trainable theta components; empty = all
  GradientOptions gradient;
};

struct EpisodeResult {
  EpisodeLog log;
  ThetaParams theta;  // after the last update
  double mean_loss = 0.0;
  bool failed = false;
  int updates = 0;
  int skipped_updates = 0;  // steps whose solve was not accurate enough to differentiate
};

// One episode of per-step gradient descent on theta: solve, sensitivity,
// control, step, window loss, chain rule and a projected update.
// setup.theta is the initial value.
EpisodeResult TrainEpisode(const ClosedLoopSetup& setup, const ReferenceTrajectory& reference,
                           const DisturbanceProfile& disturbance, const TrainingConfig& config);

// Joint network tuning of the estimator (masked theta) and the position gains
// with the closed-loop chain rule. The networks read the measured position and
// velocity; their losses are (dL/dtheta) . theta and (dL/dK) . K.
struct PolicyConfig {
  LossConfig loss;
  std::vector<int> mask;            // default ForceEstimationMask
  BoundedRatioMap theta_bounds;     // default ThetaBounds(mask)
  BoundedRatioMap gain_bounds;      // default GainBounds()
  double learning_rate = 1e-4;
  double adam_epsilon = 1e-8;
  int hidden = 50;
  std::uint64_t seed = 1;
  GradientOptions gradient;
  bool train = true;  // false: run the policies without updating them

  // Fills defaults for empty members.
  void Complete(const ThetaLayout& layout);
};

// kp in (1, 8), kv in (1, 6).
BoundedRatioMap GainBounds();

struct PolicyPair {
  MlpPolicy estimator;  // outputs |mask| ratios
  MlpPolicy gains;      // outputs 6 ratios

  // Networks with a zero output layer, so that their outputs reproduce
  // `theta` and `gains` for every input until training moves them.
  static PolicyPair Initial(const PolicyConfig& config, const ThetaParams& theta,
                            const ControlGains& gains);
};

struct PolicyEpisodeResult {
  EpisodeLog log;
  PolicyPair policies;
  double mean_loss = 0.0;
  bool failed = false;
  int updates = 0;
  int skipped_updates = 0;
};

// setup.theta supplies the entries outside the mask.
PolicyEpisodeResult TrainPolicyEpisode(const ClosedLoopSetup& setup,
                                       const ReferenceTrajectory& reference,
                                       const DisturbanceProfile& disturbance,
                                       const PolicyConfig& config, PolicyPair policies);

// Network input: measured position and velocity.
Eigen::VectorXd PolicyInput(const Vector18& measurement);

ControlGains GainsFromRatios(const BoundedRatioMap& bounds, const Eigen::VectorXd& ratios,
                             const ControlGains& base);

}  // namespace dmhe

#endif  // DMHE_LEARNING_H_
