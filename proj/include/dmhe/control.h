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

#ifndef DMHE_CONTROL_H_
#define DMHE_CONTROL_H_

#include <Eigen/Dense>

#include "dmhe/rigid_body.h"

namespace dmhe {

struct ReferencePoint {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  Eigen::Vector3d acceleration = Eigen::Vector3d::Zero();
  Eigen::Vector3d heading = Eigen::Vector3d::UnitX();  // b1d, unit
  // Optional attitude feedforward, body frame of the desired attitude.
  Eigen::Vector3d angular_velocity = Eigen::Vector3d::Zero();
  Eigen::Vector3d angular_acceleration = Eigen::Vector3d::Zero();
};

// Position gains are in acceleration units (multiplied by mass inside the
// law); attitude gains are in torque units.
struct ControlGains {
  Eigen::Vector3d kp = Eigen::Vector3d::Constant(4.0);
  Eigen::Vector3d kv = Eigen::Vector3d::Constant(3.0);
  Eigen::Vector3d kr = Eigen::Vector3d::Constant(2.5);
  Eigen::Vector3d kw = Eigen::Vector3d::Constant(0.3);

  void Validate() const;
};

enum class ControlLaw {
  kGeometric,   // compensates estimated force and torque
  kPdBaseline,  // compensates the estimated force only
};

struct ControlOptions {
  ControlLaw law = ControlLaw::kGeometric;
  // Disables the disturbance feedforward entirely (uncompensated baseline).
  bool feedforward = true;
  // Per-motor upper limit as a multiple of the hover input.
  double max_motor_ratio = 1.5;
};

struct ControlCommand {
  ControlInput input;
  Eigen::Vector4d wrench = Eigen::Vector4d::Zero();  // requested, before clamping
  Eigen::Matrix3d desired_attitude = Eigen::Matrix3d::Identity();
  int clamped_motors = 0;
  bool thrust_clamped = false;
  // Fraction of the requested yaw torque kept to avoid motor saturation.
  double yaw_scale = 1.0;
};

// Nearest rotation by Newton polar iteration. Requires det(m) > 0.
Eigen::Matrix3d ProjectToSo3(const Eigen::Matrix3d& m);

// Throws DegenerateAttitudeError when the desired thrust vector vanishes.
ControlCommand ComputeControl(const ReferencePoint& ref, const Vector24& estimate,
                              const ControlGains& gains, const QuadrotorParams& params,
                              const ControlOptions& options = {});

struct ControlJacobian {
  Eigen::Matrix<double, 4, 24> du_dx;         // w.r.t. the full estimate
  Eigen::Matrix<double, 4, 6> du_dgains;      // w.r.t. [kp, kv]
};

// Exact derivatives of the motor command (clamped motors have zero rows; a
// reduced yaw torque is differentiated through its scale factor).
ControlJacobian ControlJacobians(const ReferencePoint& ref, const Vector24& estimate,
                                 const ControlGains& gains, const QuadrotorParams& params,
                                 const ControlOptions& options = {});

}  // namespace dmhe

#endif  // DMHE_CONTROL_H_
