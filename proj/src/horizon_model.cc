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

#include "dmhe/horizon_model.h"

#include <stdexcept>
#include <utility>

namespace dmhe {

QuadrotorModel::QuadrotorModel(const QuadrotorParams& params, double dt)
    : params_(params), dt_(dt) {
  params_.Validate();
  if (!(dt > 0.0)) throw std::invalid_argument("QuadrotorModel: dt must be positive");
  h_ = Eigen::MatrixXd::Zero(state::kMeasDim, state::kDim);
  h_.leftCols(state::kMeasDim).setIdentity();
}

Eigen::VectorXd QuadrotorModel::Step(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                     const Eigen::VectorXd& w) const {
  ControlInput c;
  c.u = u;
  return EulerStep(x, c, w, dt_, params_);
}

void QuadrotorModel::Linearize(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                               Eigen::MatrixXd& a, Eigen::MatrixXd& b) const {
  ControlInput c;
  c.u = u;
  const StepJacobians jac = Jacobians(x, c, dt_, params_);
  a = jac.A;
  b = jac.B;
}

Eigen::MatrixXd QuadrotorModel::Curvature(const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& /*u*/,
                                          const Eigen::VectorXd& lambda) const {
  return CurvatureTerm(x, lambda, dt_, params_);
}

LinearModel::LinearModel(Eigen::MatrixXd a, Eigen::MatrixXd b, Eigen::MatrixXd h,
                         Eigen::MatrixXd control_map)
    : a_(std::move(a)), b_(std::move(b)), h_(std::move(h)), u_(std::move(control_map)) {
  if (a_.rows() != a_.cols() || b_.rows() != a_.rows() || h_.cols() != a_.rows()) {
    throw std::invalid_argument("LinearModel: inconsistent dimensions");
  }
  if (u_.size() == 0) u_ = Eigen::MatrixXd::Zero(a_.rows(), 0);
  if (u_.rows() != a_.rows()) throw std::invalid_argument("LinearModel: bad control map");
}

LinearModel LinearModel::ScalarRandomWalk(double dt) {
  return LinearModel(Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Constant(1, 1, dt),
                     Eigen::MatrixXd::Identity(1, 1));
}

Eigen::VectorXd LinearModel::Step(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                  const Eigen::VectorXd& w) const {
  Eigen::VectorXd next = a_ * x + b_ * w;
  if (u_.cols() > 0) next += u_ * u;
  return next;
}

void LinearModel::Linearize(const Eigen::VectorXd& /*x*/, const Eigen::VectorXd& /*u*/,
                            Eigen::MatrixXd& a, Eigen::MatrixXd& b) const {
  a = a_;
  b = b_;
}

Eigen::MatrixXd LinearModel::Curvature(const Eigen::VectorXd& /*x*/,
                                       const Eigen::VectorXd& /*u*/,
                                       const Eigen::VectorXd& /*lambda*/) const {
  return Eigen::MatrixXd::Zero(a_.rows(), a_.rows());
}

}  // namespace dmhe
