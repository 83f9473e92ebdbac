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

#ifndef DMHE_DMHE_GRADIENT_H_
#define DMHE_DMHE_GRADIENT_H_

#include "dmhe/horizon_model.h"
#include "dmhe/kkt_recursion.h"
#include "dmhe/mhe.h"

namespace dmhe {

struct GradientOptions {
  // Solutions with a larger KKT residual are rejected.
  double max_kkt_residual = 1e-6;
  // Mutation hook for verification: negates every E_k.
  bool flip_e_sign = false;
};

// Assembles the differentiated KKT system at a converged solution. Jacobians
// and curvature are evaluated along the smoothed trajectory. The arrival
// prior is treated as a constant.
// Throws std::invalid_argument for non-converged solutions.
DiffKktMatrices BuildDiffKkt(const HorizonModel& model, const MheProblem& problem,
                             const HorizonSolution& solution,
                             const GradientOptions& options = {});

// BuildDiffKkt followed by KalmanGradient: d x_{k|N} / d theta for every k.
GradientTrajectory EstimateSensitivity(const HorizonModel& model, const MheProblem& problem,
                                       const HorizonSolution& solution,
                                       const GradientOptions& options = {});

}  // namespace dmhe

#endif  // DMHE_DMHE_GRADIENT_H_
