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

#ifndef DMHE_RIGID_BODY_H_
#define DMHE_RIGID_BODY_H_

#include <Eigen/Dense>

namespace dmhe {

// Extended quadrotor state layout (NED inertial frame, FRD body frame):
//   [p(3), v(3), vec(R)(9, row-major), omega(3), d_f(3), d_tau(3)]
namespace state {
inline constexpr int kPos = 0;
inline constexpr int kVel = 3;
inline constexpr int kRot = 6;
inline constexpr int kRate = 15;
inline constexpr int kForce = 18;
inline constexpr int kTorque = 21;
inline constexpr int kDim = 24;
inline constexpr int kQuadDim = 18;  // p, v, R, omega
inline constexpr int kNoiseDim = 6;  // random-walk drivers of d_f, d_tau
inline constexpr int kMeasDim = 18;
}  // namespace state

using Vector24 = Eigen::Matrix<double, 24, 1>;
using Vector18 = Eigen::Matrix<double, 18, 1>;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix24 = Eigen::Matrix<double, 24, 24>;

// Physical constants of the airframe.
struct QuadrotorParams {
  double mass = 1.8;                                            // kg
  Eigen::Vector3d inertia = {0.0183, 0.0197, 0.0322};           // kg m^2 (diagonal)
  double arm_length = 0.21;                                     // m
  double thrust_coeff = 1.024e-7;                               // b
  double drag_coeff = 1.303e-9;                                 // k_a
  double gravity = 9.81;                                        // m/s^2

  // Throws std::invalid_argument if any invariant is violated.
  void Validate() const;

  // Plus-configuration mixer mapping squared motor speeds to [f, tau_m].
  Eigen::Matrix4d Mixer() const;

  // Per-motor squared speed that produces hover thrust.
  double HoverMotorInput() const;
};

// Squared motor speeds (rad/s)^2.
struct ControlInput {
  Eigen::Vector4d u = Eigen::Vector4d::Zero();

  // [f, tau_mx, tau_my, tau_mz] = K u.
  Eigen::Vector4d Wrench(const QuadrotorParams& params) const;

  static ControlInput FromWrench(const Eigen::Vector4d& wrench,
                                 const QuadrotorParams& params);
};

// Accessors over the flat 24-vector.
inline Eigen::Vector3d Position(const Vector24& x) { return x.segment<3>(state::kPos); }
inline Eigen::Vector3d Velocity(const Vector24& x) { return x.segment<3>(state::kVel); }
inline Eigen::Vector3d BodyRate(const Vector24& x) { return x.segment<3>(state::kRate); }
inline Eigen::Vector3d DisturbanceForce(const Vector24& x) {
  return x.segment<3>(state::kForce);
}
inline Eigen::Vector3d DisturbanceTorque(const Vector24& x) {
  return x.segment<3>(state::kTorque);
}
Eigen::Matrix3d Rotation(const Vector24& x);
void SetRotation(const Eigen::Matrix3d& rotation, Vector24& x);

// Skew-symmetric matrix with Skew(a) * b = a x b.
Eigen::Matrix3d Skew(const Eigen::Vector3d& a);

// Hover state at the given position with identity attitude.
Vector24 HoverState(const Eigen::Vector3d& position = Eigen::Vector3d::Zero());

// Continuous-time extended dynamics: rigid body plus random-walk wrench.
Vector24 ContinuousDerivative(const Vector24& x, const ControlInput& u,
                              const Vector6& noise, const QuadrotorParams& params);

// First-order Euler discretization used by the estimator.
Vector24 EulerStep(const Vector24& x, const ControlInput& u, const Vector6& noise,
                   double dt, const QuadrotorParams& params);

// Truth propagation: classical RK4 with the wrench held at `disturbance`,
// followed by re-orthonormalization of R.
Vector24 Rk4Step(const Vector24& x, const ControlInput& u, const Vector6& disturbance,
                 double dt, const QuadrotorParams& params);

// Nearest rotation in the Frobenius sense (polar factor of `m`).
Eigen::Matrix3d NearestRotation(const Eigen::Matrix3d& m);

struct StepJacobians {
  Matrix24 A;                                      // df/dx
  Eigen::Matrix<double, 24, 6> B;                  // df/deta
  Eigen::Matrix<double, 18, 24> H;                 // dh/dx
};

// Exact Jacobians of EulerStep and of the measurement selection h.
StepJacobians Jacobians(const Vector24& x, const ControlInput& u, double dt,
                        const QuadrotorParams& params);

// d(A^T lambda)/dx for the Euler step, i.e. dt * sum_i lambda_i Hess(xdot_i).
// Symmetric; independent of u and of the process noise.
Matrix24 CurvatureTerm(const Vector24& x, const Vector24& lambda, double dt,
                       const QuadrotorParams& params);

// h(x): the first 18 components.
inline Vector18 Measure(const Vector24& x) { return x.head<18>(); }

}  // namespace dmhe

#endif  // DMHE_RIGID_BODY_H_
