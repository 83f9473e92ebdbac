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

#ifndef DMHE_HARNESS_H_
#define DMHE_HARNESS_H_

#include <array>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dmhe/config.h"
#include "dmhe/learning.h"
#include "dmhe/scenarios.h"
#include "dmhe/weights.h"

namespace dmhe {

enum class ExitCode : int {
  kSuccess = 0,
  kConfigError = 1,
  kVerificationFailure = 2,
  kDivergence = 3,
};

// ---------------------------------------------------------------------------
// Multi-episode training from one initial condition.

struct EpisodeSummary {
  int episode = 0;
  double mean_loss = 0.0;
  double tracking_rms = 0.0;      // m
  double disturbance_rms = 0.0;   // N, force channels
  ThetaParams theta;              // after the episode
  int updates = 0;
  int skipped_updates = 0;
  bool failed = false;
  std::string abort_reason;
};

struct ConditionResult {
  std::array<double, 2> initial = {0.0, 0.0};  // (gamma1, gamma2)
  ThetaParams initial_theta;
  std::vector<EpisodeSummary> episodes;
  ThetaParams theta;                    // final
  std::optional<PolicyPair> policies;   // policy mode only
  bool failed = false;
  bool converged = false;
  int failed_episode = -1;
  EpisodeLog failed_log;
};

// True once the mean loss changed by less than `tolerance` (relative) over
// each of the last two episode transitions.
bool LossConverged(const std::vector<double>& mean_losses, double tolerance);

using EpisodeCallback = std::function<void(int episode, const EpisodeLog& log)>;

// Starts from config.theta (or theta.file) with the forgetting factors
// replaced by `initial` unless theta.file is set, and trains for at most
// `max_episodes` episodes (stopping early on convergence). Every episode
// replays the same seeded scenario.
ConditionResult TrainCondition(const HarnessConfig& config, const std::array<double, 2>& initial,
                               int max_episodes, const EpisodeCallback& callback = {});

// Initial conditions a `train` run uses: one entry for a theta file,
// otherwise learning.initial_conditions.
std::vector<std::array<double, 2>> TrainingConditions(const HarnessConfig& config);

// ---------------------------------------------------------------------------
// Commands. Each writes its artifacts and a manifest.json to `out_dir`
// (created if needed) and returns an exit code.

struct CommandContext {
  std::string out_dir;  // empty: no files (gradcheck, bench print only)
  int workers = 1;
  std::string command_line;
  std::ostream* out = &std::cout;
  std::ostream* err = &std::cerr;
};

ExitCode RunSimulate(const HarnessConfig& config, const CommandContext& ctx);
ExitCode RunTrain(const HarnessConfig& config, const CommandContext& ctx);
ExitCode RunGradcheck(const HarnessConfig& config, const CommandContext& ctx);
ExitCode RunBench(const HarnessConfig& config, const CommandContext& ctx);

// Re-runs the command recorded in a manifest (simulate or train) into
// ctx.out_dir and compares every CSV artifact byte for byte.
ExitCode RunReplay(const std::string& manifest_path, const CommandContext& ctx);

}  // namespace dmhe

#endif  // DMHE_HARNESS_H_
