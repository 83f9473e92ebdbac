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

#include "dmhe/weights.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace dmhe {

ThetaParams::ThetaParams(const ThetaLayout& layout)
    : layout_(layout), values_(Eigen::VectorXd::Ones(layout.size())) {}

ThetaParams::ThetaParams(const ThetaLayout& layout, Eigen::VectorXd values)
    : layout_(layout), values_(std::move(values)) {
  if (values_.size() != layout_.size()) {
    throw std::invalid_argument("ThetaParams: expected " + std::to_string(layout_.size()) +
                                " values, got " + std::to_string(values_.size()));
  }
}

ThetaParams ThetaParams::Uniform(const ThetaLayout& layout, double p0, double gamma1,
                                 double r0, double gamma2, double q0) {
  ThetaParams theta(layout);
  Eigen::VectorXd& v = theta.values_;
  v.segment(layout.p_offset(), layout.state_dim).setConstant(p0);
  v(layout.gamma1_index()) = gamma1;
  v.segment(layout.r_offset(), layout.output_dim).setConstant(r0);
  v(layout.gamma2_index()) = gamma2;
  v.segment(layout.q_offset(), layout.noise_dim).setConstant(q0);
  return theta;
}

void ThetaParams::Validate(double gamma_min) const {
  for (int i = 0; i < size(); ++i) {
    const double v = values_(i);
    if (!std::isfinite(v)) {
      throw std::invalid_argument("theta[" + std::to_string(i) + "] (" + GroupName(i) +
                                  ") is not finite");
    }
    if (i == layout_.gamma1_index() || i == layout_.gamma2_index()) {
      if (!(v > gamma_min && v < 1.0)) {
        throw std::invalid_argument(GroupName(i) + " = " + std::to_string(v) +
                                    " outside (gamma_min, 1)");
      }
    } else if (!(v > 0.0)) {
      throw std::invalid_argument("theta[" + std::to_string(i) + "] (" + GroupName(i) +
                                  ") must be positive");
    }
  }
}

bool ThetaParams::IsValid(double gamma_min) const {
  try {
    Validate(gamma_min);
  } catch (const std::invalid_argument&) {
    return false;
  }
  return true;
}

std::string ThetaParams::GroupName(int index) const {
  if (index == layout_.gamma1_index()) return "gamma1";
  if (index == layout_.gamma2_index()) return "gamma2";
  if (index < layout_.gamma1_index()) return "p" + std::to_string(index + 1);
  if (index < layout_.gamma2_index()) {
    return "r" + std::to_string(index - layout_.r_offset() + 1);
  }
  return "q" + std::to_string(index - layout_.q_offset() + 1);
}

HorizonWeights Expand(const ThetaParams& theta, int horizon) {
  if (horizon < 2) throw std::invalid_argument("Expand: horizon must be >= 2");
  HorizonWeights w;
  w.p = theta.p();
  w.r.reserve(horizon);
  w.q.reserve(horizon - 1);
  for (int k = 0; k < horizon; ++k) {
    w.r.push_back(std::pow(theta.gamma1(), horizon - 1 - k) * theta.r());
  }
  for (int k = 0; k + 1 < horizon; ++k) {
    w.q.push_back(std::pow(theta.gamma2(), horizon - 2 - k) * theta.q());
  }
  return w;
}

StagePartials ThetaPartials(const ThetaParams& theta, int horizon, int stage) {
  if (horizon < 2 || stage < 0 || stage >= horizon) {
    throw std::invalid_argument("ThetaPartials: stage out of range");
  }
  const ThetaLayout& l = theta.layout();
  const int n = l.size();
  StagePartials out;
  out.dp = Eigen::MatrixXd::Zero(l.state_dim, n);
  out.dr = Eigen::MatrixXd::Zero(l.output_dim, n);
  out.dq = Eigen::MatrixXd::Zero(l.noise_dim, n);

  out.dp.middleCols(l.p_offset(), l.state_dim).setIdentity();

  const int er = horizon - 1 - stage;
  const double g1 = theta.gamma1();
  out.dr.middleCols(l.r_offset(), l.output_dim) =
      std::pow(g1, er) * Eigen::MatrixXd::Identity(l.output_dim, l.output_dim);
  if (er > 0) out.dr.col(l.gamma1_index()) = er * std::pow(g1, er - 1) * theta.r();

  if (stage + 1 < horizon) {
    const int eq = horizon - 2 - stage;
    const double g2 = theta.gamma2();
    out.dq.middleCols(l.q_offset(), l.noise_dim) =
        std::pow(g2, eq) * Eigen::MatrixXd::Identity(l.noise_dim, l.noise_dim);
    if (eq > 0) out.dq.col(l.gamma2_index()) = eq * std::pow(g2, eq - 1) * theta.q();
  }
  return out;
}

namespace {

// Backtracks a forgetting-factor step into (gamma_min, 1).
double BacktrackGamma(double gamma, double step, double gamma_min, bool& blocked,
                      int& halvings) {
  blocked = false;
  halvings = 0;
  if (step == 0.0) return gamma;
  for (int i = 0; i <= 30; ++i) {
    const double candidate = gamma + step;
    if (candidate > gamma_min && candidate < 1.0) return candidate;
    step *= 0.5;
    halvings = i + 1;
  }
  blocked = true;
  return gamma;
}

}  // namespace

ProjectedUpdate ProjectUpdate(const ThetaParams& theta, const Eigen::VectorXd& gradient,
                              const LearningRates& rates, double gamma_min,
                              const std::vector<int>& mask) {
  const ThetaLayout& l = theta.layout();
  if (gradient.size() != l.size()) {
    throw std::invalid_argument("ProjectUpdate: gradient size mismatch");
  }
  if (!gradient.allFinite()) throw std::invalid_argument("ProjectUpdate: non-finite gradient");

  std::vector<bool> active(l.size(), mask.empty());
  for (int i : mask) active.at(i) = true;

  ProjectedUpdate out{theta};
  Eigen::VectorXd& v = out.theta.mutable_values();
  for (int i = 0; i < l.size(); ++i) {
    if (!active[i]) continue;
    if (i == l.gamma1_index()) {
      v(i) = BacktrackGamma(v(i), -rates.gamma * gradient(i), gamma_min, out.gamma1_blocked,
                            out.gamma1_halvings);
    } else if (i == l.gamma2_index()) {
      v(i) = BacktrackGamma(v(i), -rates.gamma * gradient(i), gamma_min, out.gamma2_blocked,
                            out.gamma2_halvings);
    } else {
      double rate = rates.q;
      if (i < l.gamma1_index()) {
        rate = rates.p;
      } else if (i < l.gamma2_index()) {
        rate = rates.r;
      }
      v(i) = std::max(kWeightFloor, v(i) - rate * gradient(i));
    }
  }
  return out;
}

BoundedRatioMap::BoundedRatioMap(Eigen::VectorXd lower, Eigen::VectorXd upper)
    : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() != upper_.size()) {
    throw std::invalid_argument("BoundedRatioMap: bound sizes differ");
  }
  for (int i = 0; i < lower_.size(); ++i) {
    if (!(lower_(i) < upper_(i))) {
      throw std::invalid_argument("BoundedRatioMap: min must be < max at index " +
                                  std::to_string(i));
    }
  }
}

Eigen::VectorXd BoundedRatioMap::Map(const Eigen::VectorXd& ratios) const {
  if (ratios.size() != size()) throw std::invalid_argument("BoundedRatioMap: size mismatch");
  return lower_ + Scale().cwiseProduct(ratios);
}

Eigen::VectorXd BoundedRatioMap::Inverse(const Eigen::VectorXd& values) const {
  if (values.size() != size()) throw std::invalid_argument("BoundedRatioMap: size mismatch");
  return (values - lower_).cwiseQuotient(Scale());
}

std::vector<int> ForceEstimationMask(const ThetaLayout& l) {
  std::vector<int> mask;
  // p over position, velocity, disturbance force.
  for (int i = 0; i < 6; ++i) mask.push_back(l.p_offset() + i);
  for (int i = 18; i < 21; ++i) mask.push_back(l.p_offset() + i);
  mask.push_back(l.gamma1_index());
  // r over position and velocity measurements.
  for (int i = 0; i < 6; ++i) mask.push_back(l.r_offset() + i);
  mask.push_back(l.gamma2_index());
  // q over force noise.
  for (int i = 0; i < 3; ++i) mask.push_back(l.q_offset() + i);
  return mask;
}

BoundedRatioMap ThetaBounds(const ThetaLayout& l, const std::vector<int>& mask, double p_lo,
                            double p_hi, double rq_lo, double rq_hi, double g_lo,
                            double g_hi) {
  Eigen::VectorXd lo(mask.size()), hi(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) {
    const int idx = mask[i];
    if (idx == l.gamma1_index() || idx == l.gamma2_index()) {
      lo(i) = g_lo;
      hi(i) = g_hi;
    } else if (idx < l.gamma1_index()) {
      lo(i) = p_lo;
      hi(i) = p_hi;
    } else {
      lo(i) = rq_lo;
      hi(i) = rq_hi;
    }
  }
  return BoundedRatioMap(lo, hi);
}

nlohmann::json ThetaToJson(const ThetaParams& theta, double gamma_min) {
  const ThetaLayout& l = theta.layout();
  nlohmann::json j;
  j["values"] = std::vector<double>(theta.values().data(),
                                    theta.values().data() + theta.values().size());
  j["layout"] = {{"state_dim", l.state_dim},
                 {"output_dim", l.output_dim},
                 {"noise_dim", l.noise_dim}};
  j["bounds"] = {{"gamma_min", gamma_min}, {"gamma_max", 1.0}, {"weight_floor", kWeightFloor}};
  return j;
}

ThetaParams ThetaFromJson(const nlohmann::json& j) {
  ThetaLayout l;
  if (j.contains("layout")) {
    const auto& jl = j.at("layout");
    l.state_dim = jl.at("state_dim").get<int>();
    l.output_dim = jl.at("output_dim").get<int>();
    l.noise_dim = jl.at("noise_dim").get<int>();
  }
  const std::vector<double> values = j.at("values").get<std::vector<double>>();
  return ThetaParams(l, Eigen::Map<const Eigen::VectorXd>(values.data(),
                                                           static_cast<Eigen::Index>(values.size())));
}

}  // namespace dmhe
