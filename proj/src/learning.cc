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

#include "dmhe/learning.h"

#include <chrono>
#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

#include "dmhe/errors.h"

namespace dmhe {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double Ms(std::chrono::steady_clock::duration d) {
  return std::chrono::duration<double, std::milli>(d).count();
}

double Sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Log record of step s; the current step's record is not in the log yet.
const StepRecord& RecordAt(const StepContext& ctx, const StepRecord& current, int s) {
  if (s == current.step) return current;
  if (ctx.log == nullptr || s < 0 || s >= static_cast<int>(ctx.log->steps.size())) {
    throw std::out_of_range("no log record for step " + std::to_string(s));
  }
  return ctx.log->steps[s];
}

}  // namespace

// ---------------------------------------------------------------------------
// Loss.

Vector18 LossConfig::DefaultKappa() {
  Vector18 k = Vector18::Zero();
  k.segment<3>(state::kPos).setConstant(1.0);
  k.segment<3>(state::kVel).setConstant(0.1);
  return k;
}

void LossConfig::Validate() const {
  if (!kappa.allFinite() || (kappa.array() < 0.0).any()) {
    throw std::invalid_argument("LossConfig: kappa must be finite and non-negative");
  }
  if (!std::isfinite(beta)) throw std::invalid_argument("LossConfig: beta must be finite");
}

Vector18 ReferenceState(const ReferencePoint& ref) {
  Vector18 r = Vector18::Zero();
  r.segment<3>(state::kPos) = ref.position;
  r.segment<3>(state::kVel) = ref.velocity;
  Eigen::Vector3d b1(ref.heading.x(), ref.heading.y(), 0.0);
  if (b1.norm() < 1e-9) b1 = Eigen::Vector3d::UnitX();
  b1.normalize();
  const Eigen::Vector3d b3 = Eigen::Vector3d::UnitZ();
  Eigen::Matrix3d rot;
  rot.col(0) = b1;
  rot.col(1) = b3.cross(b1);
  rot.col(2) = b3;
  Vector24 x = Vector24::Zero();
  SetRotation(rot, x);
  r.segment<9>(state::kRot) = x.segment<9>(state::kRot);
  r.segment<3>(state::kRate) = ref.angular_velocity;
  return r;
}

TrackingLoss EvaluateTrackingLoss(const std::vector<VectorXd>& states,
                                  const std::vector<Vector18>& references,
                                  const LossConfig& config) {
  config.Validate();
  const int n = static_cast<int>(states.size());
  if (n == 0 || static_cast<int>(references.size()) != n) {
    throw std::invalid_argument("EvaluateTrackingLoss: need one reference per state");
  }
  TrackingLoss loss;
  // Softmax of beta * k, shifted for stability.
  const double shift = config.beta >= 0.0 ? config.beta * (n - 1) : 0.0;
  double z = 0.0;
  loss.weights.resize(n);
  for (int k = 0; k < n; ++k) {
    loss.weights[k] = std::exp(config.beta * k - shift);
    z += loss.weights[k];
  }
  for (double& w : loss.weights) w /= z;

  loss.stage_losses.resize(n);
  loss.gradient.resize(n);
  for (int k = 0; k < n; ++k) {
    if (states[k].size() < state::kQuadDim) {
      throw std::invalid_argument("EvaluateTrackingLoss: state shorter than 18 entries");
    }
    const Vector18 err = states[k].head<state::kQuadDim>() - references[k];
    loss.stage_losses[k] = err.dot(config.kappa.cwiseProduct(err));
    loss.total += loss.weights[k] * loss.stage_losses[k];
    loss.gradient[k] = VectorXd::Zero(states[k].size());
    loss.gradient[k].head<state::kQuadDim>() =
        2.0 * loss.weights[k] * config.kappa.cwiseProduct(err);
  }
  return loss;
}

Eigen::RowVectorXd ChainRuleDirect(const TrackingLoss& loss, const GradientTrajectory& sens) {
  if (loss.gradient.size() != sens.x.size() || sens.x.empty()) {
    throw std::invalid_argument("ChainRuleDirect: loss and sensitivity horizons differ");
  }
  Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(sens.x.front().cols());
  for (size_t k = 0; k < sens.x.size(); ++k) {
    if (loss.gradient[k].size() != sens.x[k].rows()) {
      throw std::invalid_argument("ChainRuleDirect: state dimension mismatch");
    }
    g += loss.gradient[k].transpose() * sens.x[k];
  }
  return g;
}

// ---------------------------------------------------------------------------
// Closed-loop chain rule.

Vector6 TranslationalModel::Step(const Vector6& s, const Eigen::Vector4d& u,
                                 const Eigen::Matrix3d& attitude,
                                 const Eigen::Vector3d& force) const {
  const double thrust = params.Mixer().row(0).dot(u);
  const Eigen::Vector3d a = params.gravity * Eigen::Vector3d::UnitZ() +
                            (force - thrust * attitude.col(2)) / params.mass;
  Vector6 next;
  next.head<3>() = s.head<3>() + dt * s.tail<3>() + 0.5 * dt * dt * a;
  next.tail<3>() = s.tail<3>() + dt * a;
  return next;
}

Eigen::Matrix<double, 6, 6> TranslationalModel::StateJacobian() const {
  Eigen::Matrix<double, 6, 6> j = Eigen::Matrix<double, 6, 6>::Identity();
  j.topRightCorner<3, 3>() = dt * Eigen::Matrix3d::Identity();
  return j;
}

Eigen::Matrix<double, 6, 4> TranslationalModel::ControlJacobian(
    const Eigen::Matrix3d& attitude) const {
  const Eigen::Matrix<double, 3, 4> da =
      -attitude.col(2) * params.Mixer().row(0) / params.mass;
  Eigen::Matrix<double, 6, 4> j;
  j.topRows<3>() = 0.5 * dt * dt * da;
  j.bottomRows<3>() = dt * da;
  return j;
}

ClosedLoopGradient ChainRuleClosedLoop(const std::vector<Vector6>& loss_gradient,
                                       const std::vector<ClosedLoopStage>& stages,
                                       const GradientTrajectory& sens,
                                       const TranslationalModel& fbar) {
  const int n = static_cast<int>(stages.size());
  if (static_cast<int>(loss_gradient.size()) != n) {
    throw std::invalid_argument("ChainRuleClosedLoop: need one loss gradient per stage");
  }
  if (sens.x.empty()) throw std::invalid_argument("ChainRuleClosedLoop: empty sensitivity");
  ClosedLoopGradient out;
  out.theta = Eigen::RowVectorXd::Zero(sens.x.front().cols());
  const Eigen::Matrix<double, 6, 6> fs = fbar.StateJacobian();
  Vector6 mu = Vector6::Zero();
  for (int k = n - 1; k >= 0; --k) {
    mu = loss_gradient[k] + fs.transpose() * mu;  // total dL/ds_{k+1}
    const ClosedLoopStage& st = stages[k];
    if (st.estimate_stage < 0 || st.estimate_stage >= static_cast<int>(sens.x.size())) {
      throw std::invalid_argument("ChainRuleClosedLoop: missing sensitivity for stage " +
                                  std::to_string(k));
    }
    const MatrixXd& x = sens.x[st.estimate_stage];
    if (x.rows() != state::kDim) {
      throw std::invalid_argument("ChainRuleClosedLoop: sensitivity must have 24 rows");
    }
    const Eigen::Matrix<double, 1, 4> c = mu.transpose() * fbar.ControlJacobian(st.attitude);
    out.theta += (c * st.du_dx) * x;
    out.gains += c * st.du_dgains;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Policy network.

MlpPolicy::MlpPolicy(int inputs, int hidden, int outputs, std::uint64_t seed) {
  if (inputs <= 0 || hidden <= 0 || outputs <= 0) {
    throw std::invalid_argument("MlpPolicy: layer sizes must be positive");
  }
  std::mt19937_64 rng(seed);
  const double a1 = 1.0 / std::sqrt(static_cast<double>(inputs));
  const double a2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> u1(-a1, a1), u2(-a2, a2);
  w1_.resize(hidden, inputs);
  b1_.resize(hidden);
  w2_.resize(outputs, hidden);
  b2_.resize(outputs);
  for (int i = 0; i < hidden; ++i) {
    for (int j = 0; j < inputs; ++j) w1_(i, j) = u1(rng);
  }
  for (int i = 0; i < hidden; ++i) b1_(i) = u1(rng);
  for (int i = 0; i < outputs; ++i) {
    for (int j = 0; j < hidden; ++j) w2_(i, j) = u2(rng);
  }
  for (int i = 0; i < outputs; ++i) b2_(i) = u2(rng);
  slope_ = VectorXd::Constant(hidden, kPreluInitialSlope);
}

int MlpPolicy::ParameterCount() const {
  return static_cast<int>(w1_.size() + b1_.size() + slope_.size() + w2_.size() + b2_.size());
}

VectorXd MlpPolicy::Forward(const VectorXd& input) const {
  if (input.size() != inputs()) throw std::invalid_argument("MlpPolicy: wrong input size");
  const VectorXd z1 = w1_ * input + b1_;
  VectorXd h(z1.size());
  for (int i = 0; i < z1.size(); ++i) h(i) = z1(i) >= 0.0 ? z1(i) : slope_(i) * z1(i);
  const VectorXd z2 = w2_ * h + b2_;
  return z2.unaryExpr([](double z) { return Sigmoid(z); });
}

VectorXd MlpPolicy::Backward(const VectorXd& input, const VectorXd& upstream) const {
  if (input.size() != inputs() || upstream.size() != outputs()) {
    throw std::invalid_argument("MlpPolicy: wrong input or upstream size");
  }
  const VectorXd z1 = w1_ * input + b1_;
  VectorXd h(z1.size());
  for (int i = 0; i < z1.size(); ++i) h(i) = z1(i) >= 0.0 ? z1(i) : slope_(i) * z1(i);
  const VectorXd y = (w2_ * h + b2_).unaryExpr([](double z) { return Sigmoid(z); });

  const VectorXd dz2 = upstream.cwiseProduct(y.cwiseProduct(VectorXd::Ones(y.size()) - y));
  const VectorXd dh = w2_.transpose() * dz2;
  VectorXd dz1(z1.size()), dslope(z1.size());
  for (int i = 0; i < z1.size(); ++i) {
    dz1(i) = z1(i) >= 0.0 ? dh(i) : slope_(i) * dh(i);
    dslope(i) = z1(i) >= 0.0 ? 0.0 : z1(i) * dh(i);
  }
  const MatrixXd dw1 = dz1 * input.transpose();
  const MatrixXd dw2 = dz2 * h.transpose();

  VectorXd g(ParameterCount());
  int o = 0;
  for (int i = 0; i < dw1.rows(); ++i) {
    for (int j = 0; j < dw1.cols(); ++j) g(o++) = dw1(i, j);
  }
  g.segment(o, dz1.size()) = dz1;
  o += static_cast<int>(dz1.size());
  g.segment(o, dslope.size()) = dslope;
  o += static_cast<int>(dslope.size());
  for (int i = 0; i < dw2.rows(); ++i) {
    for (int j = 0; j < dw2.cols(); ++j) g(o++) = dw2(i, j);
  }
  g.segment(o, dz2.size()) = dz2;
  return g;
}

VectorXd MlpPolicy::Parameters() const {
  VectorXd p(ParameterCount());
  int o = 0;
  for (int i = 0; i < w1_.rows(); ++i) {
    for (int j = 0; j < w1_.cols(); ++j) p(o++) = w1_(i, j);
  }
  p.segment(o, b1_.size()) = b1_;
  o += static_cast<int>(b1_.size());
  p.segment(o, slope_.size()) = slope_;
  o += static_cast<int>(slope_.size());
  for (int i = 0; i < w2_.rows(); ++i) {
    for (int j = 0; j < w2_.cols(); ++j) p(o++) = w2_(i, j);
  }
  p.segment(o, b2_.size()) = b2_;
  return p;
}

void MlpPolicy::SetParameters(const VectorXd& p) {
  if (p.size() != ParameterCount()) {
    throw std::invalid_argument("MlpPolicy: expected " + std::to_string(ParameterCount()) +
                                " parameters, got " + std::to_string(p.size()));
  }
  if (!p.allFinite()) throw std::invalid_argument("MlpPolicy: non-finite parameters");
  int o = 0;
  for (int i = 0; i < w1_.rows(); ++i) {
    for (int j = 0; j < w1_.cols(); ++j) w1_(i, j) = p(o++);
  }
  b1_ = p.segment(o, b1_.size());
  o += static_cast<int>(b1_.size());
  slope_ = p.segment(o, slope_.size());
  o += static_cast<int>(slope_.size());
  for (int i = 0; i < w2_.rows(); ++i) {
    for (int j = 0; j < w2_.cols(); ++j) w2_(i, j) = p(o++);
  }
  b2_ = p.segment(o, b2_.size());
}

void MlpPolicy::SetOutputBias(const VectorXd& ratios) {
  if (ratios.size() != outputs() || (ratios.array() <= 0.0).any() ||
      (ratios.array() >= 1.0).any()) {
    throw std::invalid_argument("MlpPolicy: output ratios must lie in (0, 1)");
  }
  b2_ = ratios.unaryExpr([](double r) { return std::log(r / (1.0 - r)); });
}

void MlpPolicy::ZeroOutputWeights() { w2_.setZero(); }

Adam::Adam(int size, double learning_rate, double epsilon, double beta1, double beta2)
    : lr_(learning_rate),
      eps_(epsilon),
      beta1_(beta1),
      beta2_(beta2),
      m_(VectorXd::Zero(size)),
      v_(VectorXd::Zero(size)) {
  if (!(learning_rate > 0.0) || !(epsilon > 0.0) || beta1 < 0.0 || beta1 >= 1.0 ||
      beta2 < 0.0 || beta2 >= 1.0) {
    throw std::invalid_argument("Adam: invalid hyperparameters");
  }
}

void Adam::Step(VectorXd& params, const VectorXd& gradient) {
  if (params.size() != m_.size() || gradient.size() != m_.size()) {
    throw std::invalid_argument("Adam: size mismatch");
  }
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * gradient;
  v_ = beta2_ * v_ + (1.0 - beta2_) * gradient.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

// ---------------------------------------------------------------------------
// Training.

namespace {

struct WindowData {
  int first = 0;
  std::vector<const StepRecord*> records;
  std::vector<Vector18> references;
};

WindowData Window(const StepContext& ctx, const StepRecord& rec) {
  WindowData w;
  w.first = ctx.solution == nullptr ? rec.step : ctx.window_first_step;
  for (int s = w.first; s <= rec.step; ++s) {
    w.records.push_back(&RecordAt(ctx, rec, s));
    w.references.push_back(ReferenceState(w.records.back()->reference));
  }
  return w;
}

TrackingLoss FeedbackLoss(const WindowData& w, const LossConfig& config) {
  std::vector<VectorXd> feedback;
  for (const StepRecord* r : w.records) feedback.push_back(r->measurement);
  return EvaluateTrackingLoss(feedback, w.references, config);
}

// Closed-loop gradient over controls u_1..u_{N-2} of the window. Returns
// nullopt when the control law is degenerate somewhere in the window.
std::optional<ClosedLoopGradient> WindowClosedLoopGradient(
    const StepContext& ctx, const WindowData& w, const TrackingLoss& loss,
    const GradientTrajectory& sens, const ControlGains& base, const QuadrotorParams& params,
    const TranslationalModel& fbar) {
  const int stages = static_cast<int>(w.records.size()) - 2;
  std::vector<ClosedLoopStage> st(stages);
  std::vector<Vector6> dl(stages);
  try {
    for (int k = 0; k < stages; ++k) {
      const StepRecord& r = *w.records[k];
      ControlGains g = base;
      g.kp = r.gains.head<3>();
      g.kv = r.gains.tail<3>();
      const ControlJacobian j = ControlJacobians(r.reference, Vector24(ctx.solution->states[k]),
                                                 g, params, *ctx.control_options);
      st[k].du_dx = j.du_dx;
      st[k].du_dgains = j.du_dgains;
      Vector24 meas = Vector24::Zero();
      meas.head<state::kMeasDim>() = r.measurement;
      st[k].attitude = NearestRotation(Rotation(meas));
      st[k].estimate_stage = k;
      dl[k] = loss.gradient[k + 1].head<6>();
    }
  } catch (const DegenerateAttitudeError&) {
    return std::nullopt;
  }
  ClosedLoopGradient g = ChainRuleClosedLoop(dl, st, sens, fbar);
  if (!g.theta.allFinite() || !g.gains.allFinite()) {
    throw NonFiniteError(ctx.step, "closed-loop gradient");
  }
  return g;
}

bool Differentiable(const StepContext& ctx, const GradientOptions& options) {
  return ctx.solution != nullptr && ctx.solution->states.size() >= 3 &&
         ctx.solution->kkt_residual < options.max_kkt_residual;
}

class ThetaTrainingHooks final : public EpisodeHooks {
 public:
  ThetaTrainingHooks(const ClosedLoopSetup& setup, const TrainingConfig& config)
      : setup_(setup), config_(config), fbar_{setup.params, setup.sim.dt} {}

  void AfterStep(const StepContext& ctx, StepRecord& rec, ThetaParams& theta,
                 ControlGains& /*gains*/) override {
    const WindowData w = Window(ctx, rec);
    const bool direct = config_.chain_rule == ChainRule::kDirect;
    TrackingLoss loss;
    if (direct) {
      std::vector<VectorXd> estimates;
      if (ctx.solution == nullptr) {
        estimates.push_back(rec.estimate);
      } else {
        estimates = ctx.solution->states;
      }
      loss = EvaluateTrackingLoss(estimates, w.references, config_.loss);
    } else {
      loss = FeedbackLoss(w, config_.loss);
    }
    rec.loss = loss.total;
    if (!Differentiable(ctx, config_.gradient)) {
      if (ctx.solution != nullptr) ++skipped_;
      return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const GradientTrajectory sens =
        EstimateSensitivity(*ctx.model, *ctx.problem, *ctx.solution, config_.gradient);
    Eigen::RowVectorXd grad;
    if (direct) {
      grad = ChainRuleDirect(loss, sens);
    } else {
      const auto g =
          WindowClosedLoopGradient(ctx, w, loss, sens, setup_.gains, setup_.params, fbar_);
      if (!g) {
        ++skipped_;
        return;
      }
      grad = g->theta;
    }
    rec.gradient_ms = Ms(std::chrono::steady_clock::now() - t0);
    const ThetaLayout& lay = theta.layout();
    if (!std::isfinite(grad(lay.gamma1_index())) || !std::isfinite(grad(lay.gamma2_index()))) {
      throw NonFiniteError(ctx.step, "forgetting-factor gradient");
    }
    if (!grad.allFinite()) throw NonFiniteError(ctx.step, "loss gradient");
    theta = ProjectUpdate(theta, grad.transpose(), config_.rates, config_.gamma_min,
                          config_.mask)
                .theta;
    ++updates_;
    last_theta_ = theta;
  }

  int updates() const { return updates_; }
  int skipped() const { return skipped_; }
  const std::optional<ThetaParams>& last_theta() const { return last_theta_; }

 private:
  const ClosedLoopSetup& setup_;
  const TrainingConfig& config_;
  TranslationalModel fbar_;
  int updates_ = 0;
  int skipped_ = 0;
  std::optional<ThetaParams> last_theta_;
};

}  // namespace

EpisodeResult TrainEpisode(const ClosedLoopSetup& setup, const ReferenceTrajectory& reference,
                           const DisturbanceProfile& disturbance, const TrainingConfig& config) {
  config.loss.Validate();
  setup.theta.Validate(config.gamma_min);
  ThetaTrainingHooks hooks(setup, config);
  EpisodeResult r;
  r.log = RunClosedLoop(setup, reference, disturbance, &hooks);
  r.failed = r.log.aborted;
  r.mean_loss = r.log.MeanLoss();
  r.updates = hooks.updates();
  r.skipped_updates = hooks.skipped();
  r.theta = hooks.last_theta().value_or(setup.theta);
  return r;
}

// ---------------------------------------------------------------------------
// Network tuning with the closed-loop chain rule.

BoundedRatioMap GainBounds() {
  Eigen::VectorXd lo = Eigen::VectorXd::Ones(6);
  Eigen::VectorXd hi(6);
  hi << 8.0, 8.0, 8.0, 6.0, 6.0, 6.0;
  return BoundedRatioMap(lo, hi);
}

void PolicyConfig::Complete(const ThetaLayout& layout) {
  loss.Validate();
  if (mask.empty()) mask = ForceEstimationMask(layout);
  if (theta_bounds.size() == 0) theta_bounds = ThetaBounds(layout, mask);
  if (gain_bounds.size() == 0) gain_bounds = GainBounds();
  if (theta_bounds.size() != static_cast<int>(mask.size()) || gain_bounds.size() != 6) {
    throw std::invalid_argument("PolicyConfig: bounds do not match the mask or the gains");
  }
  if (!(learning_rate > 0.0) || hidden <= 0) {
    throw std::invalid_argument("PolicyConfig: learning rate and width must be positive");
  }
}

Eigen::VectorXd PolicyInput(const Vector18& measurement) {
  return measurement.head<6>();
}

ControlGains GainsFromRatios(const BoundedRatioMap& bounds, const VectorXd& ratios,
                             const ControlGains& base) {
  const VectorXd v = bounds.Map(ratios);
  ControlGains g = base;
  g.kp = v.head<3>();
  g.kv = v.tail<3>();
  return g;
}

PolicyPair PolicyPair::Initial(const PolicyConfig& config, const ThetaParams& theta,
                               const ControlGains& gains) {
  const int m = static_cast<int>(config.mask.size());
  if (m == 0 || config.theta_bounds.size() != m) {
    throw std::invalid_argument("PolicyPair::Initial: call PolicyConfig::Complete first");
  }
  PolicyPair pair;
  pair.estimator = MlpPolicy(6, config.hidden, m, config.seed);
  pair.gains = MlpPolicy(6, config.hidden, 6, config.seed + 1);
  VectorXd masked(m);
  for (int i = 0; i < m; ++i) masked(i) = theta.values()(config.mask[i]);
  VectorXd k(6);
  k << gains.kp, gains.kv;
  pair.estimator.ZeroOutputWeights();
  pair.estimator.SetOutputBias(config.theta_bounds.Inverse(masked));
  pair.gains.ZeroOutputWeights();
  pair.gains.SetOutputBias(config.gain_bounds.Inverse(k));
  return pair;
}

namespace {

class PolicyTrainingHooks final : public EpisodeHooks {
 public:
  PolicyTrainingHooks(const ClosedLoopSetup& setup, const PolicyConfig& config,
                      PolicyPair policies)
      : setup_(setup),
        config_(config),
        policies_(std::move(policies)),
        adam_theta_(policies_.estimator.ParameterCount(), config.learning_rate,
                    config.adam_epsilon),
        adam_gains_(policies_.gains.ParameterCount(), config.learning_rate,
                    config.adam_epsilon),
        fbar_{setup.params, setup.sim.dt} {}

  void BeforeEstimate(const StepContext& /*ctx*/, const Vector18& measurement,
                      ThetaParams& theta, ControlGains& gains) override {
    input_ = PolicyInput(measurement);
    const VectorXd v = config_.theta_bounds.Map(policies_.estimator.Forward(input_));
    for (size_t i = 0; i < config_.mask.size(); ++i) {
      theta.mutable_values()(config_.mask[i]) = v(static_cast<int>(i));
    }
    gains = GainsFromRatios(config_.gain_bounds, policies_.gains.Forward(input_), setup_.gains);
  }

  void AfterStep(const StepContext& ctx, StepRecord& rec, ThetaParams& /*theta*/,
                 ControlGains& /*gains*/) override {
    const WindowData w = Window(ctx, rec);
    const TrackingLoss loss = FeedbackLoss(w, config_.loss);
    rec.loss = loss.total;
    if (!config_.train) return;
    if (!Differentiable(ctx, config_.gradient)) {
      if (ctx.solution != nullptr) ++skipped_;
      return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const GradientTrajectory sens =
        EstimateSensitivity(*ctx.model, *ctx.problem, *ctx.solution, config_.gradient);
    const auto g =
        WindowClosedLoopGradient(ctx, w, loss, sens, setup_.gains, setup_.params, fbar_);
    if (!g) {
      ++skipped_;
      return;
    }
    // d/d ratio of (dL/dtheta . theta) with dL/dtheta held fixed.
    const VectorXd scale = config_.theta_bounds.Scale();
    VectorXd up_theta(config_.mask.size());
    for (size_t i = 0; i < config_.mask.size(); ++i) {
      up_theta(static_cast<int>(i)) = g->theta(config_.mask[i]) * scale(static_cast<int>(i));
    }
    const VectorXd up_gains = g->gains.transpose().cwiseProduct(config_.gain_bounds.Scale());

    VectorXd p = policies_.estimator.Parameters();
    adam_theta_.Step(p, policies_.estimator.Backward(input_, up_theta));
    policies_.estimator.SetParameters(p);
    VectorXd q = policies_.gains.Parameters();
    adam_gains_.Step(q, policies_.gains.Backward(input_, up_gains));
    policies_.gains.SetParameters(q);
    rec.gradient_ms = Ms(std::chrono::steady_clock::now() - t0);
    ++updates_;
  }

  const PolicyPair& policies() const { return policies_; }
  int updates() const { return updates_; }
  int skipped() const { return skipped_; }

 private:
  const ClosedLoopSetup& setup_;
  const PolicyConfig& config_;
  PolicyPair policies_;
  Adam adam_theta_;
  Adam adam_gains_;
  TranslationalModel fbar_;
  VectorXd input_;
  int updates_ = 0;
  int skipped_ = 0;
};

}  // namespace

PolicyEpisodeResult TrainPolicyEpisode(const ClosedLoopSetup& setup,
                                       const ReferenceTrajectory& reference,
                                       const DisturbanceProfile& disturbance,
                                       const PolicyConfig& config, PolicyPair policies) {
  PolicyConfig cfg = config;
  cfg.Complete(setup.theta.layout());
  if (policies.estimator.outputs() != static_cast<int>(cfg.mask.size()) ||
      policies.gains.outputs() != 6 || policies.estimator.inputs() != 6 ||
      policies.gains.inputs() != 6) {
    throw std::invalid_argument("TrainPolicyEpisode: policy shapes do not match the config");
  }
  PolicyTrainingHooks hooks(setup, cfg, std::move(policies));
  PolicyEpisodeResult r;
  r.log = RunClosedLoop(setup, reference, disturbance, &hooks);
  r.failed = r.log.aborted;
  r.mean_loss = r.log.MeanLoss();
  r.policies = hooks.policies();
  r.updates = hooks.updates();
  r.skipped_updates = hooks.skipped();
  return r;
}

}  // namespace dmhe
