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

#ifndef DMHE_ERRORS_H_
#define DMHE_ERRORS_H_

#include <stdexcept>
#include <string>

namespace dmhe {

// A factorization in the horizon recursion was (numerically) singular.
class SingularMatrixError : public std::runtime_error {
 public:
  SingularMatrixError(int stage, const std::string& which, double rcond)
      : std::runtime_error("singular " + which + " at stage " + std::to_string(stage) +
                           " (rcond " + std::to_string(rcond) + ")"),
        stage_(stage),
        which_(which) {}

  int stage() const { return stage_; }
  const std::string& which() const { return which_; }

 private:
  int stage_;
  std::string which_;
};

// NaN or Inf appeared in a residual or sensitivity.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(int step, const std::string& what)
      : std::runtime_error("non-finite " + what + " at step " + std::to_string(step)),
        step_(step) {}

  int step() const { return step_; }

 private:
  int step_;
};

// Thrust direction undefined (|F_d| below threshold).
class DegenerateAttitudeError : public std::runtime_error {
 public:
  DegenerateAttitudeError() : std::runtime_error("degenerate attitude command") {}
};

}  // namespace dmhe

#endif  // DMHE_ERRORS_H_
