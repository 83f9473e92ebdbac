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

#ifndef DMHE_EXPORT_H_
#define DMHE_EXPORT_H_

#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "dmhe/learning.h"
#include "dmhe/scenarios.h"
#include "dmhe/weights.h"

namespace dmhe {

// Version of every CSV layout written below; recorded in the run manifest.
inline constexpr int kCsvSchemaVersion = 1;

// Exports use ENU for inertial vectors and FLU for body vectors; all internal
// math is NED / FRD.
Eigen::Vector3d NedToEnu(const Eigen::Vector3d& v);
Eigen::Vector3d FrdToFlu(const Eigen::Vector3d& v);

// Shortest text that reads back to the same double.
std::string FormatDouble(double v);

// One row per control step. Timing fields are left out so that identical
// runs produce identical bytes.
std::string EpisodeCsvHeader();
void WriteEpisodeCsv(std::ostream& out, const EpisodeLog& log);

// Per-step training trace: condition, episode, step, time, l_k, running
// l_mean, then every theta component. Every `stride`-th step is written.
std::string TrainingTraceHeader(const ThetaLayout& layout);
void AppendTrainingTrace(std::ostream& out, int condition, int episode, const EpisodeLog& log,
                         int stride);

struct TimingStats {
  int count = 0;
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;

  static TimingStats Of(std::vector<double> samples);
  nlohmann::json ToJson() const;
};

// Solve and gradient timings of the steps that ran them.
TimingStats SolveTiming(const EpisodeLog& log);
TimingStats GradientTiming(const EpisodeLog& log);

struct RunManifest {
  std::string command;
  std::string command_line;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::string start_time;  // ISO 8601, UTC
  std::string end_time;
  TimingStats solve_ms;
  TimingStats gradient_ms;
  std::string status = "success";  // success, config_error, verification_failure, divergence
  std::vector<std::string> artifacts;  // file names relative to the manifest
  nlohmann::json details = nlohmann::json::object();

  nlohmann::json ToJson() const;
  static RunManifest FromJson(const nlohmann::json& j);
};

std::string UtcTimestamp();

// Network weights as little-endian float64 in the MlpPolicy flat order
// (`<prefix>.bin`) plus a JSON header (`<prefix>.json`) with the shapes and
// the output bounds.
void SavePolicy(const std::string& prefix, const MlpPolicy& policy, const BoundedRatioMap& bounds,
                const nlohmann::json& extra = nlohmann::json::object());
// Throws std::runtime_error on missing files or inconsistent sizes.
MlpPolicy LoadPolicy(const std::string& prefix);

// Throws std::runtime_error when the file cannot be written.
void WriteTextFile(const std::string& path, const std::string& content);
std::string ReadTextFile(const std::string& path);

}  // namespace dmhe

#endif  // DMHE_EXPORT_H_
