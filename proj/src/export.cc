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

#include "dmhe/export.h"

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dmhe {
namespace {

using nlohmann::json;

void Put(std::ostream& out, double v) { out << ',' << FormatDouble(v); }

void Put3(std::ostream& out, const Eigen::Vector3d& v) {
  Put(out, v.x());
  Put(out, v.y());
  Put(out, v.z());
}

std::string Names3(const std::string& prefix, const std::string& suffix) {
  return "," + prefix + "x" + suffix + "," + prefix + "y" + suffix + "," + prefix + "z" + suffix;
}

}  // namespace

Eigen::Vector3d NedToEnu(const Eigen::Vector3d& v) { return {v.y(), v.x(), -v.z()}; }

Eigen::Vector3d FrdToFlu(const Eigen::Vector3d& v) { return {v.x(), -v.y(), -v.z()}; }

std::string FormatDouble(double v) {
  if (v == 0.0) v = 0.0;  // no negative zero
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Episode CSV.

std::string EpisodeCsvHeader() {
  std::string h = "step,time_s";
  h += Names3("", "_ref_m") + Names3("", "_m") + Names3("v", "_mps");
  h += Names3("", "_hat_m") + Names3("v", "_hat_mps");
  h += Names3("d_f", "_N") + Names3("d_f", "_hat_N");
  h += Names3("d_tau", "_Nm") + Names3("d_tau", "_hat_Nm");
  h += ",thrust_N,u0,u1,u2,u3,loss,mhe_iterations,kkt_residual,mhe_converged,clamped_motors";
  h += ",gamma1,gamma2";
  return h;
}

void WriteEpisodeCsv(std::ostream& out, const EpisodeLog& log) {
  out << EpisodeCsvHeader() << '\n';
  const ThetaLayout layout;
  for (const StepRecord& r : log.steps) {
    out << r.step;
    Put(out, r.time);
    Put3(out, NedToEnu(r.reference.position));
    Put3(out, NedToEnu(Position(r.truth)));
    Put3(out, NedToEnu(Velocity(r.truth)));
    Put3(out, NedToEnu(Position(r.estimate)));
    Put3(out, NedToEnu(Velocity(r.estimate)));
    Put3(out, NedToEnu(DisturbanceForce(r.truth)));
    Put3(out, NedToEnu(DisturbanceForce(r.estimate)));
    Put3(out, FrdToFlu(DisturbanceTorque(r.truth)));
    Put3(out, FrdToFlu(DisturbanceTorque(r.estimate)));
    Put(out, r.wrench(0));
    for (int i = 0; i < 4; ++i) Put(out, r.control(i));
    Put(out, r.loss);
    out << ',' << r.mhe_iterations;
    Put(out, r.kkt_residual);
    out << ',' << (r.mhe_converged ? 1 : 0) << ',' << r.clamped_motors;
    const bool has_theta = r.theta.size() == layout.size();
    Put(out, has_theta ? r.theta(layout.gamma1_index()) : 0.0);
    Put(out, has_theta ? r.theta(layout.gamma2_index()) : 0.0);
    out << '\n';
  }
}

std::string TrainingTraceHeader(const ThetaLayout& layout) {
  std::string h = "condition,episode,step,time_s,loss,loss_mean";
  for (int i = 0; i < layout.size(); ++i) h += ",theta" + std::to_string(i);
  return h;
}

void AppendTrainingTrace(std::ostream& out, int condition, int episode, const EpisodeLog& log,
                         int stride) {
  double sum = 0.0;
  for (std::size_t i = 0; i < log.steps.size(); ++i) {
    const StepRecord& r = log.steps[i];
    sum += r.loss;
    if (static_cast<int>(i) % stride != 0 && i + 1 != log.steps.size()) continue;
    out << condition << ',' << episode << ',' << r.step;
    Put(out, r.time);
    Put(out, r.loss);
    Put(out, sum / static_cast<double>(i + 1));
    for (int j = 0; j < r.theta.size(); ++j) Put(out, r.theta(j));
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Timing and manifest.

TimingStats TimingStats::Of(std::vector<double> samples) {
  TimingStats s;
  s.count = static_cast<int>(samples.size());
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  double sum = 0.0;
  for (double v : samples) sum += v;
  s.mean = sum / static_cast<double>(samples.size());
  s.median = samples[samples.size() / 2];
  s.max = samples.back();
  return s;
}

json TimingStats::ToJson() const {
  return {{"count", count}, {"mean", mean}, {"median", median}, {"max", max}};
}

TimingStats SolveTiming(const EpisodeLog& log) {
  std::vector<double> v;
  for (const StepRecord& r : log.steps) {
    if (r.mhe_iterations > 0) v.push_back(r.solve_ms);
  }
  return TimingStats::Of(std::move(v));
}

TimingStats GradientTiming(const EpisodeLog& log) {
  std::vector<double> v;
  for (const StepRecord& r : log.steps) {
    if (r.gradient_ms > 0.0) v.push_back(r.gradient_ms);
  }
  return TimingStats::Of(std::move(v));
}

json RunManifest::ToJson() const {
  return {{"csv_schema_version", kCsvSchemaVersion},
          {"command", command},
          {"command_line", command_line},
          {"config", config},
          {"seed", seed},
          {"start_time", start_time},
          {"end_time", end_time},
          {"timing_ms", {{"solve", solve_ms.ToJson()}, {"gradient", gradient_ms.ToJson()}}},
          {"status", status},
          {"artifacts", artifacts},
#ifdef DMHE_GIT_REVISION
          {"git_revision", DMHE_GIT_REVISION},
#else
          {"git_revision", "unknown"},
#endif
          {"details", details}};
}

RunManifest RunManifest::FromJson(const json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.command_line = j.value("command_line", "");
  m.config = j.at("config");
  m.seed = j.at("seed").get<std::uint64_t>();
  m.start_time = j.value("start_time", "");
  m.end_time = j.value("end_time", "");
  m.status = j.value("status", "");
  m.artifacts = j.value("artifacts", std::vector<std::string>{});
  m.details = j.value("details", json::object());
  return m;
}

std::string UtcTimestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Policy persistence.

void SavePolicy(const std::string& prefix, const MlpPolicy& policy, const BoundedRatioMap& bounds,
                const json& extra) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  const Eigen::VectorXd params = policy.Parameters();
  std::ofstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + prefix + ".bin");
  bin.write(reinterpret_cast<const char*>(params.data()),
            static_cast<std::streamsize>(params.size() * sizeof(double)));
  json header = {{"format", "float64-le"},
                 {"order", "w1 (row-major), b1, slope, w2 (row-major), b2"},
                 {"inputs", policy.inputs()},
                 {"hidden", policy.hidden()},
                 {"outputs", policy.outputs()},
                 {"parameter_count", policy.ParameterCount()},
                 {"activation", {{"hidden", "prelu"}, {"output", "sigmoid"}}},
                 {"lower", std::vector<double>(bounds.lower().data(),
                                               bounds.lower().data() + bounds.size())},
                 {"upper", std::vector<double>(bounds.upper().data(),
                                               bounds.upper().data() + bounds.size())},
                 {"extra", extra}};
  WriteTextFile(prefix + ".json", header.dump(2) + "\n");
}

MlpPolicy LoadPolicy(const std::string& prefix) {
  const json header = json::parse(ReadTextFile(prefix + ".json"));
  MlpPolicy policy(header.at("inputs").get<int>(), header.at("hidden").get<int>(),
                   header.at("outputs").get<int>(), 0);
  const int count = header.at("parameter_count").get<int>();
  if (count != policy.ParameterCount()) {
    throw std::runtime_error(prefix + ".json: parameter_count does not match the shapes");
  }
  std::ifstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot read " + prefix + ".bin");
  Eigen::VectorXd params(count);
  bin.read(reinterpret_cast<char*>(params.data()),
           static_cast<std::streamsize>(count * sizeof(double)));
  if (bin.gcount() != static_cast<std::streamsize>(count * sizeof(double)) ||
      bin.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error(prefix + ".bin: size does not match the header");
  }
  policy.SetParameters(params);
  return policy;
}

void WriteTextFile(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string ReadTextFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace dmhe
