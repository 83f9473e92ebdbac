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

#include "dmhe/rigid_body.h"

#include <stdexcept>

namespace dmhe {

namespace {

// Levi-Civita symbol on {0,1,2}.
double Epsilon(int i, int j, int k) {
  if (i == j || j == k || i == k) return 0.0;
  return ((j - i + 3) % 3 == 1) ? 1.0 : -1.0;
}

int RotIndex(int row, int col) { return state::kRot + 3 * row + col; }

}  // namespace

void QuadrotorParams::Validate() const {
  if (!(mass > 0.0)) throw std::invalid_argument("mass must be positive");
  if (!(inertia.minCoeff() > 0.0)) {
    throw std::invalid_argument("inertia diagonal must be positive");
  }
  if (!(arm_length > 0.0)) throw std::invalid_argument("arm_length must be positive");
  if (!(thrust_coeff > 0.0)) throw std::invalid_argument("thrust_coeff must be positive");
  if (!(drag_coeff > 0.0)) throw std::invalid_argument("drag_coeff must be positive");
}

Eigen::Matrix4d QuadrotorParams::Mixer() const {
  const double b = thrust_coeff;
  const double lb = arm_length * thrust_coeff;
  const double k = drag_coeff;
  Eigen::Matrix4d K;
  K << b, b, b, b,
       0, -lb, 0, lb,
       lb, 0, -lb, 0,
       -k, k, -k, k;
  return K;
}

double QuadrotorParams::HoverMotorInput() const {
  return mass * gravity / (4.0 * thrust_coeff);
}

Eigen::Vector4d ControlInput::Wrench(const QuadrotorParams& params) const {
  return params.Mixer() * u;
}

ControlInput ControlInput::FromWrench(const Eigen::Vector4d& wrench,
                                      const QuadrotorParams& params) {
  ControlInput c;
  c.u = params.Mixer().partialPivLu().solve(wrench);
  return c;
}

Eigen::Matrix3d Rotation(const Vector24& x) {
  Eigen::Matrix3d r;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r(i, j) = x(RotIndex(i, j));
  }
  return r;
}

void SetRotation(const Eigen::Matrix3d& rotation, Vector24& x) {
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) x(RotIndex(i, j)) = rotation(i, j);
  }
}

Eigen::Matrix3d Skew(const Eigen::Vector3d& a) {
  Eigen::Matrix3d s;
  s << 0, -a.z(), a.y(),
       a.z(), 0, -a.x(),
       -a.y(), a.x(), 0;
  return s;
}

Vector24 HoverState(const Eigen::Vector3d& position) {
  Vector24 x = Vector24::Zero();
  x.segment<3>(state::kPos) = position;
  SetRotation(Eigen::Matrix3d::Identity(), x);
  return x;
}

Vector24 ContinuousDerivative(const Vector24& x, const ControlInput& u,
                              const Vector6& noise, const QuadrotorParams& params) {
  const Eigen::Vector4d wrench = u.Wrench(params);
  const double thrust = wrench(0);
  const Eigen::Vector3d torque = wrench.tail<3>();
  const Eigen::Matrix3d r = Rotation(x);
  const Eigen::Vector3d w = BodyRate(x);
  const Eigen::Vector3d jw = params.inertia.cwiseProduct(w);
  const Eigen::Vector3d e3 = Eigen::Vector3d::UnitZ();

  Vector24 dx;
  dx.segment<3>(state::kPos) = Velocity(x);
  dx.segment<3>(state::kVel) =
      (params.mass * params.gravity * e3 - thrust * r * e3 + DisturbanceForce(x)) /
      params.mass;
  const Eigen::Matrix3d r_dot = r * Skew(w);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) dx(RotIndex(i, j)) = r_dot(i, j);
  }
  dx.segment<3>(state::kRate) =
      (-w.cross(jw) + torque + DisturbanceTorque(x)).cwiseQuotient(params.inertia);
  dx.segment<6>(state::kForce) = noise;
  return dx;
}

Vector24 EulerStep(const Vector24& x, const ControlInput& u, const Vector6& noise,
                   double dt, const QuadrotorParams& params) {
  return x + dt * ContinuousDerivative(x, u, noise, params);
}

Eigen::Matrix3d NearestRotation(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

Vector24 Rk4Step(const Vector24& x, const ControlInput& u, const Vector6& disturbance,
                 double dt, const QuadrotorParams& params) {
  Vector24 x0 = x;
  x0.segment<6>(state::kForce) = disturbance;
  const Vector6 zero = Vector6::Zero();
  const Vector24 k1 = ContinuousDerivative(x0, u, zero, params);
  const Vector24 k2 = ContinuousDerivative(x0 + 0.5 * dt * k1, u, zero, params);
  const Vector24 k3 = ContinuousDerivative(x0 + 0.5 * dt * k2, u, zero, params);
  const Vector24 k4 = ContinuousDerivative(x0 + dt * k3, u, zero, params);
  Vector24 next = x0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  SetRotation(NearestRotation(Rotation(next)), next);
  return next;
}

StepJacobians Jacobians(const Vector24& x, const ControlInput& u, double dt,
                        const QuadrotorParams& params) {
  const double thrust = u.Wrench(params)(0);
  const Eigen::Matrix3d r = Rotation(x);
  const Eigen::Vector3d w = BodyRate(x);
  const Eigen::Matrix3d j = params.inertia.asDiagonal();
  const Eigen::Matrix3d j_inv = params.inertia.cwiseInverse().asDiagonal();
  const Eigen::Matrix3d sw = Skew(w);

  Matrix24 fx = Matrix24::Zero();
  fx.block<3, 3>(state::kPos, state::kVel).setIdentity();
  for (int i = 0; i < 3; ++i) fx(state::kVel + i, RotIndex(i, 2)) = -thrust / params.mass;
  fx.block<3, 3>(state::kVel, state::kForce) =
      Eigen::Matrix3d::Identity() / params.mass;
  // d(R S(w))_ij / dR_il = S(w)_lj ; d/dw_m = sum_l R_il eps(l, m, j).
  for (int i = 0; i < 3; ++i) {
    for (int jj = 0; jj < 3; ++jj) {
      const int row = RotIndex(i, jj);
      for (int l = 0; l < 3; ++l) fx(row, RotIndex(i, l)) = sw(l, jj);
      for (int m = 0; m < 3; ++m) {
        double s = 0.0;
        for (int l = 0; l < 3; ++l) s += r(i, l) * Epsilon(l, m, jj);
        fx(row, state::kRate + m) = s;
      }
    }
  }
  fx.block<3, 3>(state::kRate, state::kRate) = j_inv * (Skew(j * w) - sw * j);
  fx.block<3, 3>(state::kRate, state::kTorque) = j_inv;

  StepJacobians out;
  out.A = Matrix24::Identity() + dt * fx;
  out.B.setZero();
  out.B.bottomRows<6>() = dt * Eigen::Matrix<double, 6, 6>::Identity();
  out.H.setZero();
  out.H.leftCols<18>().setIdentity();
  return out;
}

Matrix24 CurvatureTerm(const Vector24& x, const Vector24& lambda, double dt,
                       const QuadrotorParams& params) {
  Matrix24 g = Matrix24::Zero();
  // Bilinear coupling R * S(w): d2 Rdot_ij / dR_il dw_m = eps(l, m, j).
  for (int i = 0; i < 3; ++i) {
    for (int l = 0; l < 3; ++l) {
      for (int m = 0; m < 3; ++m) {
        double s = 0.0;
        for (int jj = 0; jj < 3; ++jj) s += lambda(RotIndex(i, jj)) * Epsilon(l, m, jj);
        g(RotIndex(i, l), state::kRate + m) += s;
        g(state::kRate + m, RotIndex(i, l)) += s;
      }
    }
  }
  // Gyroscopic term -J^-1 (w x Jw): d2 c_a / dw_p dw_q = eps(a, p, q)(J_q - J_p).
  const Eigen::Vector3d& jd = params.inertia;
  for (int p = 0; p < 3; ++p) {
    for (int q = 0; q < 3; ++q) {
      double s = 0.0;
      for (int a = 0; a < 3; ++a) {
        s -= lambda(state::kRate + a) / jd(a) * Epsilon(a, p, q) * (jd(q) - jd(p));
      }
      g(state::kRate + p, state::kRate + q) += s;
    }
  }
  (void)x;
  return dt * g;
}

}  // namespace dmhe
