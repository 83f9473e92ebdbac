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

#ifndef DMHE_TESTS_FD_UTIL_H_
#define DMHE_TESTS_FD_UTIL_H_

// Finite-difference and random-state helpers without a test-framework
// dependency, shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

#include "dmhe/rigid_body.h"

namespace dmhe::testing {

// Largest |a - b| / max(|b|, floor) over all entries.
inline double MaxRelativeError(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                               double floor) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("MaxRelativeError: shape mismatch");
  }
  double worst = 0.0;
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < a.cols(); ++j) {
      const double err = std::abs(a(i, j) - b(i, j)) / std::max(std::abs(b(i, j)), floor);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// Central differences of a vector function.
inline Eigen::MatrixXd NumericJacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& fn, const Eigen::VectorXd& x,
    double h) {
  const Eigen::VectorXd f0 = fn(x);
  Eigen::MatrixXd jac(f0.size(), x.size());
  for (int j = 0; j < x.size(); ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    jac.col(j) = (fn(xp) - fn(xm)) / (2.0 * h);
  }
  return jac;
}

inline Eigen::Matrix3d RandomRotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

// A generic flight state: random attitude, rates, velocity and disturbance.
inline Vector24 RandomState(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector24 x;
  for (int i = 0; i < 24; ++i) x(i) = u(rng);
  SetRotation(RandomRotation(rng), x);
  x.segment<3>(state::kForce) *= 5.0;
  x.segment<3>(state::kTorque) *= 0.2;
  return x;
}

inline ControlInput RandomControl(std::mt19937_64& rng, const QuadrotorParams& params) {
  std::uniform_real_distribution<double> u(0.7, 1.3);
  ControlInput c;
  for (int i = 0; i < 4; ++i) c.u(i) = u(rng) * params.HoverMotorInput();
  return c;
}

}  // namespace dmhe::testing

#endif  // DMHE_TESTS_FD_UTIL_H_
