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

#ifndef DMHE_HORIZON_MODEL_H_
#define DMHE_HORIZON_MODEL_H_

#include <Eigen/Dense>

#include "dmhe/rigid_body.h"

namespace dmhe {

// Discrete-time process x+ = f(x, u, w) with a linear output y = H x, as seen
// by the horizon estimator and its sensitivity engine. Implementations are
// immutable after construction and safe to share between threads.
class HorizonModel {
 public:
  virtual ~HorizonModel() = default;

  virtual int StateDim() const = 0;
  virtual int NoiseDim() const = 0;
  virtual int OutputDim() const = 0;
  virtual int ControlDim() const = 0;

  virtual Eigen::VectorXd Step(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                               const Eigen::VectorXd& w) const = 0;

  // A = df/dx, B = df/dw at (x, u). Both are independent of w.
  virtual void Linearize(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                         Eigen::MatrixXd& a, Eigen::MatrixXd& b) const = 0;

  // d(A^T lambda)/dx at (x, u).
  virtual Eigen::MatrixXd Curvature(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                    const Eigen::VectorXd& lambda) const = 0;

  virtual const Eigen::MatrixXd& OutputMatrix() const = 0;

  Eigen::VectorXd Output(const Eigen::VectorXd& x) const { return OutputMatrix() * x; }
};

// The 24-state quadrotor with Euler discretization.
class QuadrotorModel final : public HorizonModel {
 public:
  QuadrotorModel(const QuadrotorParams& params, double dt);

  int StateDim() const override { return state::kDim; }
  int NoiseDim() const override { return state::kNoiseDim; }
  int OutputDim() const override { return state::kMeasDim; }
  int ControlDim() const override { return 4; }

  Eigen::VectorXd Step(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                       const Eigen::VectorXd& w) const override;
  void Linearize(const Eigen::VectorXd& x, const Eigen::VectorXd& u, Eigen::MatrixXd& a,
                 Eigen::MatrixXd& b) const override;
  Eigen::MatrixXd Curvature(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                            const Eigen::VectorXd& lambda) const override;
  const Eigen::MatrixXd& OutputMatrix() const override { return h_; }

  const QuadrotorParams& params() const { return params_; }
  double dt() const { return dt_; }

 private:
  QuadrotorParams params_;
  double dt_;
  Eigen::MatrixXd h_;
};

// Linear time-invariant process x+ = A x + B w + c(u) with c(u) = U u.
// Used for the scalar random-walk fixture and other closed-form checks.
class LinearModel final : public HorizonModel {
 public:
  LinearModel(Eigen::MatrixXd a, Eigen::MatrixXd b, Eigen::MatrixXd h,
              Eigen::MatrixXd control_map = Eigen::MatrixXd());

  // x+ = x + dt * w, y = x.
  static LinearModel ScalarRandomWalk(double dt);

  int StateDim() const override { return static_cast<int>(a_.rows()); }
  int NoiseDim() const override { return static_cast<int>(b_.cols()); }
  int OutputDim() const override { return static_cast<int>(h_.rows()); }
  int ControlDim() const override { return static_cast<int>(u_.cols()); }

  Eigen::VectorXd Step(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                       const Eigen::VectorXd& w) const override;
  void Linearize(const Eigen::VectorXd& x, const Eigen::VectorXd& u, Eigen::MatrixXd& a,
                 Eigen::MatrixXd& b) const override;
  Eigen::MatrixXd Curvature(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                            const Eigen::VectorXd& lambda) const override;
  const Eigen::MatrixXd& OutputMatrix() const override { return h_; }

 private:
  Eigen::MatrixXd a_, b_, h_, u_;
};

}  // namespace dmhe

#endif  // DMHE_HORIZON_MODEL_H_
