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

#ifndef DMHE_WEIGHTS_H_
#define DMHE_WEIGHTS_H_

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace dmhe {

// Sizes of the weighted quantities. The tuning vector is laid out as
//   [p (state_dim), gamma1, r (output_dim), gamma2, q (noise_dim)].
struct ThetaLayout {
  int state_dim = 24;
  int output_dim = 18;
  int noise_dim = 6;

  int size() const { return state_dim + output_dim + noise_dim + 2; }
  int p_offset() const { return 0; }
  int gamma1_index() const { return state_dim; }
  int r_offset() const { return state_dim + 1; }
  int gamma2_index() const { return state_dim + 1 + output_dim; }
  int q_offset() const { return state_dim + 2 + output_dim; }

  bool operator==(const ThetaLayout&) const = default;
};

// Tuning parameters of the horizon estimator: diagonal arrival weight P,
// terminal measurement weight R_N, terminal noise weight Q_{N-1} and the two
// forgetting factors that spread R and Q over the horizon.
class ThetaParams {
 public:
  ThetaParams() : ThetaParams(ThetaLayout{}) {}
  explicit ThetaParams(const ThetaLayout& layout);
  ThetaParams(const ThetaLayout& layout, Eigen::VectorXd values);

  // p = 5, r = q = 50 with the given forgetting factors.
  static ThetaParams Initial(double gamma1 = 0.4, double gamma2 = 0.8) {
    return Uniform(ThetaLayout{}, 5.0, gamma1, 50.0, gamma2, 50.0);
  }
  static ThetaParams Uniform(const ThetaLayout& layout, double p0, double gamma1, double r0,
                             double gamma2, double q0);

  const ThetaLayout& layout() const { return layout_; }
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& mutable_values() { return values_; }
  int size() const { return layout_.size(); }

  auto p() const { return values_.segment(layout_.p_offset(), layout_.state_dim); }
  auto r() const { return values_.segment(layout_.r_offset(), layout_.output_dim); }
  auto q() const { return values_.segment(layout_.q_offset(), layout_.noise_dim); }
  double gamma1() const { return values_(layout_.gamma1_index()); }
  double gamma2() const { return values_(layout_.gamma2_index()); }

  // Throws std::invalid_argument naming the first violated invariant.
  void Validate(double gamma_min) const;
  bool IsValid(double gamma_min) const;

  std::string GroupName(int index) const;

 private:
  ThetaLayout layout_;
  Eigen::VectorXd values_;
};

// Diagonals of P, R_k (k = 0..N-1) and Q_k (k = 0..N-2), zero-based stages.
struct HorizonWeights {
  Eigen::VectorXd p;
  std::vector<Eigen::VectorXd> r;
  std::vector<Eigen::VectorXd> q;
};

// R_k = gamma1^(N-1-k) diag(r), Q_k = gamma2^(N-2-k) diag(q), P = diag(p).
// Throws std::invalid_argument for horizon < 2.
HorizonWeights Expand(const ThetaParams& theta, int horizon);

// Derivatives of the stage diagonals with respect to every theta component.
// Column j of each matrix is d(diag)/d theta_j.
struct StagePartials {
  Eigen::MatrixXd dp;  // state_dim x |theta|
  Eigen::MatrixXd dr;  // output_dim x |theta|
  Eigen::MatrixXd dq;  // noise_dim x |theta|; zero at the last stage
};

// Zero-based stage k in [0, horizon).
StagePartials ThetaPartials(const ThetaParams& theta, int horizon, int stage);

struct LearningRates {
  double p = 0.01;
  double gamma = 1e-4;
  double r = 0.1;
  double q = 0.1;
};

struct ProjectedUpdate {
  ThetaParams theta;
  bool gamma1_blocked = false;  // feasibility not restored; step on gamma1 zeroed
  bool gamma2_blocked = false;
  int gamma1_halvings = 0;
  int gamma2_halvings = 0;
};

inline constexpr double kDefaultGammaMin = 0.2;
inline constexpr double kWeightFloor = 1e-6;

// theta - lr * gradient with per-group rates. Forgetting-factor steps are
// halved (at most 30 times) until they land in (gamma_min, 1); p, r, q are
// floored at kWeightFloor. Components outside `mask` (if non-empty) are frozen.
ProjectedUpdate ProjectUpdate(const ThetaParams& theta, const Eigen::VectorXd& gradient,
                              const LearningRates& rates, double gamma_min = kDefaultGammaMin,
                              const std::vector<int>& mask = {});

// value_i = min_i + (max_i - min_i) * ratio_i with ratio_i in (0, 1).
class BoundedRatioMap {
 public:
  BoundedRatioMap() = default;
  BoundedRatioMap(Eigen::VectorXd lower, Eigen::VectorXd upper);

  int size() const { return static_cast<int>(lower_.size()); }
  const Eigen::VectorXd& lower() const { return lower_; }
  const Eigen::VectorXd& upper() const { return upper_; }

  Eigen::VectorXd Map(const Eigen::VectorXd& ratios) const;
  // d value / d ratio (diagonal).
  Eigen::VectorXd Scale() const { return upper_ - lower_; }
  Eigen::VectorXd Inverse(const Eigen::VectorXd& values) const;

 private:
  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
};

// Trainable subset used when theta is driven by a small network: weights for
// position, velocity and disturbance force states, position and velocity
// measurements, force noise, plus both forgetting factors (20 entries).
std::vector<int> ForceEstimationMask(const ThetaLayout& layout);

// Bounds for the entries selected by `mask`: p in (p_lo, p_hi),
// r and q in (rq_lo, rq_hi), gammas in (g_lo, g_hi).
BoundedRatioMap ThetaBounds(const ThetaLayout& layout, const std::vector<int>& mask,
                            double p_lo = 1.0, double p_hi = 100.0, double rq_lo = 5.0,
                            double rq_hi = 500.0, double g_lo = 0.2, double g_hi = 0.99);

nlohmann::json ThetaToJson(const ThetaParams& theta, double gamma_min);
ThetaParams ThetaFromJson(const nlohmann::json& j);

}  // namespace dmhe

#endif  // DMHE_WEIGHTS_H_
