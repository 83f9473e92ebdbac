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

#include "dmhe/control.h"

#include <cmath>
#include <stdexcept>

#include <unsupported/Eigen/AutoDiff>

#include "dmhe/errors.h"

namespace dmhe {

void ControlGains::Validate() const {
  if (!(kp.minCoeff() > 0.0 && kv.minCoeff() > 0.0 && kr.minCoeff() > 0.0 &&
        kw.minCoeff() > 0.0)) {
    throw std::invalid_argument("ControlGains: all gains must be positive");
  }
}

namespace {

constexpr double kMinThrustNorm = 1e-6;

using Derivs = Eigen::Matrix<double, 30, 1>;
using Dual = Eigen::AutoDiffScalar<Derivs>;

double Value(double s) { return s; }
double Value(const Dual& s) { return s.value(); }

template <typename S>
using Vec3 = Eigen::Matrix<S, 3, 1>;
template <typename S>
using Mat3 = Eigen::Matrix<S, 3, 3>;

template <typename S>
Mat3<S> Polar(Mat3<S> m) {
  for (int it = 0; it < 30; ++it) {
    const Vec3<S> r0 = m.row(0).transpose(), r1 = m.row(1).transpose(),
                  r2 = m.row(2).transpose();
    Mat3<S> cof;
    cof.row(0) = r1.cross(r2).transpose();
    cof.row(1) = r2.cross(r0).transpose();
    cof.row(2) = r0.cross(r1).transpose();
    const S det = r0.dot(r1.cross(r2));
    if (!(Value(det) > 0.0)) throw DegenerateAttitudeError();
    const Mat3<S> next = S(0.5) * (m + cof / det);
    double change = 0.0;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) change = std::max(change, std::abs(Value(next(i, j) - m(i, j))));
    }
    m = next;
    if (change < 1e-15) break;
  }
  return m;
}

template <typename S>
struct LawResult {
  Eigen::Matrix<S, 4, 1> u;
  Eigen::Matrix<S, 4, 1> wrench;
  Mat3<S> rd;
  int clamped = 0;
  bool thrust_clamped = false;
  double yaw_scale = 1.0;
};

template <typename S>
LawResult<S> EvaluateLaw(const ReferencePoint& ref, const Eigen::Matrix<S, 24, 1>& x,
                         const Vec3<S>& kp, const Vec3<S>& kv, const ControlGains& gains,
                         const QuadrotorParams& params, const ControlOptions& opt) {
  const Vec3<S> p = x.template segment<3>(state::kPos);
  const Vec3<S> v = x.template segment<3>(state::kVel);
  const Vec3<S> w = x.template segment<3>(state::kRate);
  Mat3<S> r_raw;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r_raw(i, j) = x(state::kRot + 3 * i + j);
  }
  const Mat3<S> r = Polar<S>(r_raw);

  const Vec3<S> e_p = p - ref.position.cast<S>();
  const Vec3<S> e_v = v - ref.velocity.cast<S>();
  const Vec3<S> e3 = Vec3<S>::UnitZ();
  // Thrust vector: f R e3 must equal m (g e3 - a) + d for the closed loop to
  // follow a = a_d - kp e_p - kv e_v.
  Vec3<S> t = S(params.mass) *
              (S(params.gravity) * e3 - ref.acceleration.cast<S>() + kp.cwiseProduct(e_p) +
               kv.cwiseProduct(e_v));
  if (opt.feedforward) t += x.template segment<3>(state::kForce);

  const S t_norm = t.norm();
  if (!(Value(t_norm) > kMinThrustNorm)) throw DegenerateAttitudeError();
  const Vec3<S> b3 = t / t_norm;
  Vec3<S> b2 = b3.cross(ref.heading.cast<S>());
  const S b2_norm = b2.norm();
  if (!(Value(b2_norm) > kMinThrustNorm)) throw DegenerateAttitudeError();
  b2 /= b2_norm;
  const Vec3<S> b1 = b2.cross(b3);
  LawResult<S> out;
  out.rd.col(0) = b1;
  out.rd.col(1) = b2;
  out.rd.col(2) = b3;

  S f = t.dot(r.col(2));
  if (Value(f) < 0.0) {
    f = S(0.0);
    out.thrust_clamped = true;
  }

  const Mat3<S> e_r_mat = S(0.5) * (out.rd.transpose() * r - r.transpose() * out.rd);
  const Vec3<S> e_r(e_r_mat(2, 1), e_r_mat(0, 2), e_r_mat(1, 0));
  const Vec3<S> jw = params.inertia.cast<S>().cwiseProduct(w);
  const Mat3<S> rel = r.transpose() * out.rd;
  const Vec3<S> w_d = rel * ref.angular_velocity.cast<S>();
  const Vec3<S> dw_d = rel * ref.angular_acceleration.cast<S>() - w.cross(w_d);
  const Vec3<S> e_w = w - w_d;
  Vec3<S> tau = -gains.kr.cast<S>().cwiseProduct(e_r) - gains.kw.cast<S>().cwiseProduct(e_w) +
                w.cross(jw) + params.inertia.cast<S>().cwiseProduct(dw_d);
  if (opt.feedforward && opt.law == ControlLaw::kGeometric) {
    tau -= x.template segment<3>(state::kTorque);
  }

  out.wrench << f, tau;
  const Eigen::Matrix4d k_inv = params.Mixer().inverse();
  const double u_max = opt.max_motor_ratio * params.HoverMotorInput();
  // Yaw has the least authority; scale it down before clamping any motor so
  // that thrust and roll/pitch torque survive saturation.
  Eigen::Matrix<S, 4, 1> tilt_wrench = out.wrench;
  tilt_wrench(3) = S(0.0);
  const Eigen::Matrix<S, 4, 1> u_tilt = k_inv.cast<S>() * tilt_wrench;
  const Eigen::Vector4d yaw_column = k_inv.col(3);
  S yaw_scale(1.0);
  bool tilt_feasible = true;
  for (int i = 0; i < 4; ++i) {
    tilt_feasible = tilt_feasible && Value(u_tilt(i)) >= 0.0 && Value(u_tilt(i)) <= u_max;
  }
  for (int i = 0; i < 4 && tilt_feasible; ++i) {
    const S delta = yaw_column(i) * tau(2);
    const S full = u_tilt(i) + delta;
    S limit;
    if (Value(full) > u_max) {
      limit = (S(u_max) - u_tilt(i)) / delta;
    } else if (Value(full) < 0.0) {
      limit = -u_tilt(i) / delta;
    } else {
      continue;
    }
    if (Value(limit) < Value(yaw_scale)) yaw_scale = limit;
  }
  if (tilt_feasible) {
    out.yaw_scale = Value(yaw_scale);
    out.u = u_tilt + yaw_scale * tau(2) * yaw_column.cast<S>();
  } else {
    out.u = k_inv.cast<S>() * out.wrench;
  }
  for (int i = 0; i < 4; ++i) {
    if (Value(out.u(i)) < 0.0) {
      out.u(i) = S(0.0);
      ++out.clamped;
    } else if (Value(out.u(i)) > u_max) {
      out.u(i) = S(u_max);
      ++out.clamped;
    }
  }
  return out;
}

}  // namespace

Eigen::Matrix3d ProjectToSo3(const Eigen::Matrix3d& m) { return Polar<double>(m); }

ControlCommand ComputeControl(const ReferencePoint& ref, const Vector24& estimate,
                              const ControlGains& gains, const QuadrotorParams& params,
                              const ControlOptions& options) {
  const LawResult<double> r =
      EvaluateLaw<double>(ref, estimate, gains.kp, gains.kv, gains, params, options);
  ControlCommand cmd;
  cmd.input.u = r.u;
  cmd.wrench = r.wrench;
  cmd.desired_attitude = r.rd;
  cmd.clamped_motors = r.clamped;
  cmd.thrust_clamped = r.thrust_clamped;
  cmd.yaw_scale = r.yaw_scale;
  return cmd;
}

ControlJacobian ControlJacobians(const ReferencePoint& ref, const Vector24& estimate,
                                 const ControlGains& gains, const QuadrotorParams& params,
                                 const ControlOptions& options) {
  Eigen::Matrix<Dual, 24, 1> x;
  for (int i = 0; i < 24; ++i) x(i) = Dual(estimate(i), 30, i);
  Vec3<Dual> kp, kv;
  for (int i = 0; i < 3; ++i) {
    kp(i) = Dual(gains.kp(i), 30, 24 + i);
    kv(i) = Dual(gains.kv(i), 30, 27 + i);
  }
  const LawResult<Dual> r = EvaluateLaw<Dual>(ref, x, kp, kv, gains, params, options);
  ControlJacobian jac;
  for (int i = 0; i < 4; ++i) {
    Derivs d = r.u(i).derivatives();
    if (d.size() == 0) d.setZero();  // clamped to a constant
    jac.du_dx.row(i) = d.head<24>().transpose();
    jac.du_dgains.row(i) = d.tail<6>().transpose();
  }
  return jac;
}

}  // namespace dmhe
