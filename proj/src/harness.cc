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

#include "dmhe/harness.h"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <sstream>
#include <thread>

#include "dmhe/export.h"
#include "dmhe/verification.h"

namespace dmhe {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<int> kForceChannels = {0, 1, 2};

std::string StatusName(ExitCode code) {
  switch (code) {
    case ExitCode::kSuccess:
      return "success";
    case ExitCode::kConfigError:
      return "config_error";
    case ExitCode::kVerificationFailure:
      return "verification_failure";
    case ExitCode::kDivergence:
      return "divergence";
  }
  return "unknown";
}

RunManifest StartManifest(const std::string& command, const HarnessConfig& config,
                          const CommandContext& ctx) {
  RunManifest m;
  m.command = command;
  m.command_line = ctx.command_line;
  m.config = ConfigToJson(config);
  m.seed = config.seed;
  m.start_time = UtcTimestamp();
  return m;
}

void PrepareOutDir(const CommandContext& ctx) {
  if (!ctx.out_dir.empty()) fs::create_directories(ctx.out_dir);
}

std::string OutPath(const CommandContext& ctx, const std::string& name) {
  return (fs::path(ctx.out_dir) / name).string();
}

void WriteArtifact(const CommandContext& ctx, RunManifest& m, const std::string& name,
                   const std::string& content) {
  if (ctx.out_dir.empty()) return;
  WriteTextFile(OutPath(ctx, name), content);
  m.artifacts.push_back(name);
}

ExitCode FinishManifest(const CommandContext& ctx, RunManifest& m, ExitCode code) {
  m.status = StatusName(code);
  m.end_time = UtcTimestamp();
  if (!ctx.out_dir.empty()) WriteTextFile(OutPath(ctx, "manifest.json"), m.ToJson().dump(2) + "\n");
  return code;
}

std::string EpisodeCsv(const EpisodeLog& log) {
  std::ostringstream out;
  WriteEpisodeCsv(out, log);
  return out.str();
}

std::string Fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

// Runs fn(i) for i in [0, count) on up to `workers` threads.
template <typename Fn>
void ParallelFor(int count, int workers, const Fn& fn) {
  std::atomic<int> next{0};
  const auto work = [&] {
    for (int i = next++; i < count; i = next++) fn(i);
  };
  std::vector<std::thread> threads;
  for (int w = 1; w < std::min(std::max(workers, 1), count); ++w) threads.emplace_back(work);
  work();
  for (auto& t : threads) t.join();
}

}  // namespace

// ---------------------------------------------------------------------------
// Training driver.

bool LossConverged(const std::vector<double>& mean_losses, double tolerance) {
  const std::size_t n = mean_losses.size();
  if (n < 3) return false;
  const auto rel = [&](std::size_t i) {
    return std::abs(mean_losses[i] - mean_losses[i - 1]) /
           std::max(std::abs(mean_losses[i - 1]), 1e-300);
  };
  return rel(n - 1) < tolerance && rel(n - 2) < tolerance;
}

std::vector<std::array<double, 2>> TrainingConditions(const HarnessConfig& config) {
  if (!config.theta.file.empty()) {
    const ThetaParams theta = config.theta.Build();
    return {{theta.gamma1(), theta.gamma2()}};
  }
  return config.learning.initial_conditions;
}

ConditionResult TrainCondition(const HarnessConfig& config, const std::array<double, 2>& initial,
                               int max_episodes, const EpisodeCallback& callback) {
  ClosedLoopSetup setup = config.Setup();
  if (config.theta.file.empty()) {
    const ThetaLayout& l = setup.theta.layout();
    setup.theta.mutable_values()(l.gamma1_index()) = initial[0];
    setup.theta.mutable_values()(l.gamma2_index()) = initial[1];
  }
  ConditionResult result;
  result.initial = initial;
  result.initial_theta = setup.theta;
  result.theta = setup.theta;
  const auto reference = config.scenario.Reference();
  const DisturbanceProfile disturbance = config.scenario.Disturbance();
  const bool policy_mode = config.learning.mode == "policy";
  const TrainingConfig training = config.Training();
  const PolicyConfig policy_config = config.Policy(setup.theta.layout());
  if (policy_mode) result.policies = PolicyPair::Initial(policy_config, setup.theta, setup.gains);

  std::vector<double> means;
  for (int e = 0; e < max_episodes; ++e) {
    EpisodeSummary s;
    s.episode = e;
    EpisodeLog log;
    if (policy_mode) {
      PolicyEpisodeResult r =
          TrainPolicyEpisode(setup, *reference, disturbance, policy_config, *result.policies);
      result.policies = r.policies;
      s.mean_loss = r.mean_loss;
      s.failed = r.failed;
      s.updates = r.updates;
      s.skipped_updates = r.skipped_updates;
      log = std::move(r.log);
      if (!log.steps.empty() && log.steps.back().theta.size() == setup.theta.size()) {
        result.theta = ThetaParams(setup.theta.layout(), log.steps.back().theta);
      }
    } else {
      EpisodeResult r = TrainEpisode(setup, *reference, disturbance, training);
      s.mean_loss = r.mean_loss;
      s.failed = r.failed;
      s.updates = r.updates;
      s.skipped_updates = r.skipped_updates;
      result.theta = r.theta;
      setup.theta = r.theta;
      log = std::move(r.log);
    }
    s.theta = result.theta;
    s.tracking_rms = log.TrackingRms();
    s.disturbance_rms = log.DisturbanceRms(kForceChannels);
    s.abort_reason = log.abort_reason;
    result.episodes.push_back(s);
    if (callback) callback(e, log);
    if (s.failed) {
      result.failed = true;
      result.failed_episode = e;
      result.failed_log = std::move(log);
      break;
    }
    means.push_back(s.mean_loss);
    if (LossConverged(means, config.learning.convergence_tolerance)) {
      result.converged = true;
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// simulate

ExitCode RunSimulate(const HarnessConfig& config, const CommandContext& ctx) {
  PrepareOutDir(ctx);
  RunManifest m = StartManifest("simulate", config, ctx);
  const ClosedLoopSetup setup = config.Setup();
  const auto reference = config.scenario.Reference();
  const EpisodeLog log = RunClosedLoop(setup, *reference, config.scenario.Disturbance());
  WriteArtifact(ctx, m, "episode.csv", EpisodeCsv(log));
  m.solve_ms = SolveTiming(log);
  m.gradient_ms = GradientTiming(log);
  m.details = {{"scenario", config.scenario.name},
               {"steps", log.steps.size()},
               {"tracking_rms_m", log.TrackingRms()},
               {"disturbance_rms_N", log.DisturbanceRms(kForceChannels)},
               {"aborted", log.aborted},
               {"abort_reason", log.abort_reason},
               {"abort_step", log.abort_step}};
  *ctx.out << "simulate " << config.scenario.name << ": " << log.steps.size() << " steps, tracking rms "
           << Fmt("%.4g", log.TrackingRms()) << " m, force estimation rms "
           << Fmt("%.4g", log.DisturbanceRms(kForceChannels)) << " N\n";
  if (log.aborted) {
    *ctx.err << "episode diverged at step " << log.abort_step << ": " << log.abort_reason << "\n";
    return FinishManifest(ctx, m, ExitCode::kDivergence);
  }
  return FinishManifest(ctx, m, ExitCode::kSuccess);
}

// ---------------------------------------------------------------------------
// train

ExitCode RunTrain(const HarnessConfig& config, const CommandContext& ctx) {
  PrepareOutDir(ctx);
  RunManifest m = StartManifest("train", config, ctx);
  const auto conditions = TrainingConditions(config);
  const int n = static_cast<int>(conditions.size());
  std::vector<ConditionResult> results(n);
  std::vector<std::string> traces(n);
  std::vector<std::vector<double>> solve(n), gradient(n);
  std::mutex print_mutex;
  ParallelFor(n, ctx.workers, [&](int c) {
    std::ostringstream trace;
    results[c] = TrainCondition(config, conditions[c], config.learning.episodes,
                                [&](int e, const EpisodeLog& log) {
                                  AppendTrainingTrace(trace, c, e, log,
                                                      config.learning.trace_stride);
                                  for (const StepRecord& r : log.steps) {
                                    if (r.mhe_iterations > 0) solve[c].push_back(r.solve_ms);
                                    if (r.gradient_ms > 0.0) gradient[c].push_back(r.gradient_ms);
                                  }
                                  std::lock_guard<std::mutex> lock(print_mutex);
                                  *ctx.out << "condition " << c << " episode " << e
                                           << " mean loss "
                                           << Fmt("%.6g", log.MeanLoss()) << "\n";
                                });
    traces[c] = trace.str();
  });

  const ThetaLayout layout;
  std::string trace_csv = TrainingTraceHeader(layout) + "\n";
  for (const auto& t : traces) trace_csv += t;
  WriteArtifact(ctx, m, "training_trace.csv", trace_csv);

  std::ostringstream episodes;
  episodes << "condition,gamma1_initial,gamma2_initial,episode,loss_mean,tracking_rms_m,"
              "disturbance_rms_N,updates,skipped_updates,failed";
  for (int i = 0; i < layout.size(); ++i) episodes << ",theta" << i;
  episodes << '\n';
  json details = json::array();
  ExitCode code = ExitCode::kSuccess;
  std::vector<double> all_solve, all_gradient;
  for (int c = 0; c < n; ++c) {
    const ConditionResult& r = results[c];
    for (const EpisodeSummary& s : r.episodes) {
      episodes << c << ',' << FormatDouble(r.initial[0]) << ',' << FormatDouble(r.initial[1])
               << ',' << s.episode << ',' << FormatDouble(s.mean_loss) << ','
               << FormatDouble(s.tracking_rms) << ',' << FormatDouble(s.disturbance_rms) << ','
               << s.updates << ',' << s.skipped_updates << ',' << (s.failed ? 1 : 0);
      for (int i = 0; i < s.theta.size(); ++i) episodes << ',' << FormatDouble(s.theta.values()(i));
      episodes << '\n';
    }
    const std::string tag = "c" + std::to_string(c);
    WriteArtifact(ctx, m, "theta_" + tag + ".json",
                  ThetaToJson(r.theta, config.learning.gamma_min).dump(2) + "\n");
    if (r.policies) {
      const PolicyConfig pc = config.Policy(layout);
      if (!ctx.out_dir.empty()) {
        const json extra = {{"mask", pc.mask}};
        SavePolicy(OutPath(ctx, "policy_" + tag + "_estimator"), r.policies->estimator,
                   pc.theta_bounds, extra);
        SavePolicy(OutPath(ctx, "policy_" + tag + "_gains"), r.policies->gains, pc.gain_bounds);
        for (const char* part : {"_estimator", "_gains"}) {
          m.artifacts.push_back("policy_" + tag + part + ".bin");
          m.artifacts.push_back("policy_" + tag + part + ".json");
        }
      }
    }
    if (r.failed) {
      code = ExitCode::kDivergence;
      WriteArtifact(ctx, m,
                    "failed_" + tag + "_episode" + std::to_string(r.failed_episode) + ".csv",
                    EpisodeCsv(r.failed_log));
      *ctx.err << "condition " << c << " diverged in episode " << r.failed_episode << ": "
               << r.failed_log.abort_reason << "\n";
    }
    details.push_back({{"condition", c},
                       {"initial", r.initial},
                       {"episodes", r.episodes.size()},
                       {"converged", r.converged},
                       {"failed", r.failed},
                       {"final_loss", r.episodes.empty() ? 0.0 : r.episodes.back().mean_loss},
                       {"gamma1", r.theta.gamma1()},
                       {"gamma2", r.theta.gamma2()}});
    all_solve.insert(all_solve.end(), solve[c].begin(), solve[c].end());
    all_gradient.insert(all_gradient.end(), gradient[c].begin(), gradient[c].end());
  }
  WriteArtifact(ctx, m, "episodes.csv", episodes.str());
  m.solve_ms = TimingStats::Of(all_solve);
  m.gradient_ms = TimingStats::Of(all_gradient);
  m.details = {{"mode", config.learning.mode}, {"conditions", details}};
  return FinishManifest(ctx, m, code);
}

// ---------------------------------------------------------------------------
// gradcheck

ExitCode RunGradcheck(const HarnessConfig& config, const CommandContext& ctx) {
  PrepareOutDir(ctx);
  RunManifest m = StartManifest("gradcheck", config, ctx);
  const GradientCheckReport gradient = CheckLossGradient(config);
  const OracleReport oracle = CheckOracleEquivalence(config, ctx.workers);
  const bool passed = gradient.passed && oracle.passed;
  const json report = {{"passed", passed},
                       {"flip_e_sign", config.gradcheck.flip_e_sign},
                       {"checks", {gradient.ToJson(), oracle.ToJson()}}};
  *ctx.out << report.dump(2) << "\n";
  WriteArtifact(ctx, m, "gradcheck.json", report.dump(2) + "\n");
  m.details = {{"passed", passed},
               {"loss_gradient_max_relative_error", gradient.max_relative_error},
               {"oracle_max_abs_difference", oracle.max_abs_difference}};
  return FinishManifest(ctx, m, passed ? ExitCode::kSuccess : ExitCode::kVerificationFailure);
}

// ---------------------------------------------------------------------------
// bench

ExitCode RunBench(const HarnessConfig& config, const CommandContext& ctx) {
  PrepareOutDir(ctx);
  RunManifest m = StartManifest("bench", config, ctx);
  const BenchReport report = RunBenchmark(config);
  *ctx.out << report.Csv();
  *ctx.out << "linear fit: " << Fmt("%.4g", report.fit.slope) << " ms/stage, R^2 "
           << Fmt("%.4f", report.fit.r_squared) << (report.passed ? ", passed" : ", failed")
           << "\n";
  WriteArtifact(ctx, m, "bench.csv", report.Csv());
  WriteArtifact(ctx, m, "bench.json", report.ToJson().dump(2) + "\n");
  m.details = report.ToJson();
  return FinishManifest(ctx, m,
                        report.passed ? ExitCode::kSuccess : ExitCode::kVerificationFailure);
}

// ---------------------------------------------------------------------------
// replay

ExitCode RunReplay(const std::string& manifest_path, const CommandContext& ctx) {
  const RunManifest original = RunManifest::FromJson(json::parse(ReadTextFile(manifest_path)));
  HarnessConfig config = ConfigFromJson(original.config);
  config.Validate();
  if (ctx.out_dir.empty()) throw ConfigError("replay needs an output directory");
  CommandContext inner = ctx;
  inner.command_line = ctx.command_line;
  ExitCode code;
  if (original.command == "simulate") {
    code = RunSimulate(config, inner);
  } else if (original.command == "train") {
    code = RunTrain(config, inner);
  } else {
    throw ConfigError("replay supports simulate and train manifests, not '" + original.command +
                      "'");
  }
  const fs::path source_dir = fs::path(manifest_path).parent_path();
  int compared = 0, mismatched = 0;
  for (const std::string& a : original.artifacts) {
    if (fs::path(a).extension() != ".csv") continue;
    ++compared;
    const fs::path before = source_dir / a;
    const fs::path after = fs::path(ctx.out_dir) / a;
    const bool same = fs::exists(before) && fs::exists(after) &&
                      ReadTextFile(before.string()) == ReadTextFile(after.string());
    if (!same) ++mismatched;
    *ctx.out << (same ? "identical " : "DIFFERENT ") << a << "\n";
  }
  *ctx.out << "replay: " << compared - mismatched << "/" << compared << " artifacts identical\n";
  if (mismatched > 0) return ExitCode::kVerificationFailure;
  return code;
}

}  // namespace dmhe
