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

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "dmhe/config.h"
#include "dmhe/export.h"
#include "dmhe/verification.h"

namespace dmhe {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Fresh directory under the system temp dir, removed at scope exit.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("dmhe_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string Sub(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

// A one-second composite episode with a short horizon.
HarnessConfig QuickConfig() {
  HarnessConfig c;
  c.sim.horizon = 10;
  c.scenario.composite_duration = 1.0;
  c.learning.episodes = 2;
  return c;
}

CommandContext QuietContext(const std::string& out_dir, std::ostringstream& sink) {
  CommandContext ctx;
  ctx.out_dir = out_dir;
  ctx.out = &sink;
  ctx.err = &sink;
  return ctx;
}

std::string ConfigError(const std::string& text) {
  try {
    ParseConfig(text);
  } catch (const dmhe::ConfigError& e) {
    return e.what();
  }
  return "";
}

// ---------------------------------------------------------------------------
// Configuration.

TEST(ConfigTest, JsonRoundTrip) {
  HarnessConfig c;
  c.seed = 42;
  c.sim.horizon = 17;
  c.scenario.name = "payload";
  c.learning.initial_conditions = {{0.4, 0.8}, {0.8, 0.6}};
  c.learning.chain_rule = ChainRule::kClosedLoop;
  c.bench.horizons = {5, 10};
  c.bench.reference_ms = {1.0, 2.0};
  const json j = ConfigToJson(c);
  const HarnessConfig back = ConfigFromJson(j);
  EXPECT_EQ(ConfigToJson(back), j);
  EXPECT_EQ(back.seed, 42u);
  EXPECT_EQ(back.scenario.name, "payload");
  EXPECT_EQ(back.learning.chain_rule, ChainRule::kClosedLoop);
}

TEST(ConfigTest, ShippedDefaultMatchesBuiltInDefaults) {
  const HarnessConfig c = LoadConfig(std::string(DMHE_SOURCE_DIR) + "/configs/default.json");
  EXPECT_EQ(ConfigToJson(c), ConfigToJson(HarnessConfig{}));
}

TEST(ConfigTest, MissingKeyIsNamed) {
  json j = ConfigToJson(HarnessConfig{});
  j["sim"].erase("horizon");
  EXPECT_NE(ConfigError(j.dump()).find("missing key sim.horizon"), std::string::npos);
}

TEST(ConfigTest, UnknownKeyIsNamed) {
  json j = ConfigToJson(HarnessConfig{});
  j["learning"]["epsiodes"] = 3;
  EXPECT_NE(ConfigError(j.dump()).find("learning.epsiodes: unknown key"), std::string::npos);
}

TEST(ConfigTest, WrongTypeIsReported) {
  json j = ConfigToJson(HarnessConfig{});
  j["sim"]["horizon"] = "twenty";
  EXPECT_NE(ConfigError(j.dump()).find("sim.horizon"), std::string::npos);
}

TEST(ConfigTest, SyntaxErrorReportsLineAndColumn) {
  const std::string msg = ConfigError("{\n  \"seed\": 1,\n  \"sim\": ]\n}");
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("column"), std::string::npos) << msg;
}

TEST(ConfigTest, ValidationRejectsBadValues) {
  json j = ConfigToJson(HarnessConfig{});
  j["learning"]["initial_conditions"] = {{0.1, 0.8}};
  EXPECT_NE(ConfigError(j.dump()).find("learning.initial_conditions"), std::string::npos);
  j = ConfigToJson(HarnessConfig{});
  j["scenario"]["name"] = "storm";
  EXPECT_NE(ConfigError(j.dump()).find("scenario.name"), std::string::npos);
}

TEST(ConfigTest, ThetaFileIsResolvedAgainstTheConfigDirectory) {
  TempDir dir;
  const ThetaParams theta = ThetaParams::Uniform(ThetaLayout{}, 3.0, 0.5, 40.0, 0.7, 60.0);
  WriteTextFile(dir.Sub("theta.json"), ThetaToJson(theta, kDefaultGammaMin).dump());
  HarnessConfig c;
  c.theta.file = "theta.json";
  WriteTextFile(dir.Sub("config.json"), ConfigToJson(c).dump());
  const HarnessConfig loaded = LoadConfig(dir.Sub("config.json"));
  EXPECT_EQ(loaded.theta.Build().values(), theta.values());
  EXPECT_EQ(TrainingConditions(loaded).size(), 1u);
}

// ---------------------------------------------------------------------------
// Export.

TEST(ExportTest, NedToEnu) {
  const Eigen::Vector3d v = NedToEnu(Eigen::Vector3d(1.0, 2.0, -3.0));
  EXPECT_EQ(v, Eigen::Vector3d(2.0, 1.0, 3.0));
  // A payload pulling down (+z NED) points to -z ENU.
  EXPECT_LT(NedToEnu(Eigen::Vector3d(0.0, 0.0, 5.87)).z(), 0.0);
}

TEST(ExportTest, FrdToFlu) {
  EXPECT_EQ(FrdToFlu(Eigen::Vector3d(1.0, 2.0, 3.0)), Eigen::Vector3d(1.0, -2.0, -3.0));
}

TEST(ExportTest, FormatDoubleRoundTrips) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
    EXPECT_EQ(std::stod(FormatDouble(v)), v);
  }
  EXPECT_EQ(FormatDouble(-0.0), "0");
  EXPECT_EQ(FormatDouble(0.5), "0.5");
}

TEST(ExportTest, EpisodeCsvRowsMatchTheHeader) {
  const HarnessConfig c = QuickConfig();
  const auto ref = c.scenario.Reference();
  const EpisodeLog log = RunClosedLoop(c.Setup(), *ref, c.scenario.Disturbance());
  std::ostringstream out;
  WriteEpisodeCsv(out, log);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  const auto columns = [](const std::string& s) { return std::count(s.begin(), s.end(), ',') + 1; };
  const auto header_columns = columns(line);
  int rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(columns(line), header_columns);
    ++rows;
  }
  EXPECT_EQ(rows, static_cast<int>(log.steps.size()));
}

TEST(ExportTest, PolicyRoundTrip) {
  TempDir dir;
  MlpPolicy net(6, 8, 4, 9);
  Eigen::VectorXd p = net.Parameters();
  for (int i = 0; i < p.size(); ++i) p(i) = std::sin(1.0 + i);
  net.SetParameters(p);
  const BoundedRatioMap bounds(Eigen::Vector4d::Zero(), Eigen::Vector4d::Ones());
  SavePolicy(dir.Sub("policy"), net, bounds);
  const MlpPolicy back = LoadPolicy(dir.Sub("policy"));
  EXPECT_EQ(back.Parameters(), p);
  EXPECT_EQ(fs::file_size(dir.Sub("policy.bin")), p.size() * sizeof(double));
  const json header = json::parse(ReadTextFile(dir.Sub("policy.json")));
  EXPECT_EQ(header.at("format"), "float64-le");
  EXPECT_EQ(header.at("hidden"), 8);
}

TEST(ExportTest, TruncatedPolicyIsRejected) {
  TempDir dir;
  const MlpPolicy net(3, 4, 2, 1);
  SavePolicy(dir.Sub("policy"), net, BoundedRatioMap(Eigen::Vector2d::Zero(),
                                                      Eigen::Vector2d::Ones()));
  fs::resize_file(dir.Sub("policy.bin"), 8);
  EXPECT_THROW(LoadPolicy(dir.Sub("policy")), std::runtime_error);
}

TEST(ExportTest, TimingStats) {
  const TimingStats s = TimingStats::Of({3.0, 1.0, 2.0});
  EXPECT_EQ(s.count, 3);
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_DOUBLE_EQ(s.median, 2.0);
  EXPECT_DOUBLE_EQ(s.max, 3.0);
  EXPECT_EQ(TimingStats::Of({}).count, 0);
}

// ---------------------------------------------------------------------------
// Training driver and verification helpers.

TEST(HarnessTest, FitLineRecoversAnExactLine) {
  const LinearFit fit = FitLine({10, 20, 30, 40}, {1.5, 2.5, 3.5, 4.5});
  EXPECT_NEAR(fit.slope, 0.1, 1e-14);
  EXPECT_NEAR(fit.intercept, 0.5, 1e-14);
  EXPECT_NEAR(fit.r_squared, 1.0, 1e-14);
  EXPECT_LT(FitLine({1, 2, 3, 4}, {1, 4, 1, 4}).r_squared, 0.5);
  EXPECT_THROW(FitLine({1, 1}, {1, 2}), std::invalid_argument);
}

TEST(HarnessTest, LossConvergence) {
  EXPECT_FALSE(LossConverged({1.0, 0.5}, 1e-3));
  EXPECT_FALSE(LossConverged({1.0, 0.5, 0.4999}, 1e-3));
  EXPECT_TRUE(LossConverged({1.0, 0.5, 0.4999, 0.49985}, 1e-3));
  EXPECT_FALSE(LossConverged({1.0, 1.0, 1.0}, 0.0));
}

TEST(HarnessTest, TrainingHonoursTheEpisodeCap) {
  HarnessConfig c = QuickConfig();
  c.learning.convergence_tolerance = 0.0;
  int calls = 0;
  const ConditionResult r =
      TrainCondition(c, {0.4, 0.8}, 2, [&](int e, const EpisodeLog&) { EXPECT_EQ(e, calls++); });
  EXPECT_EQ(calls, 2);
  ASSERT_EQ(r.episodes.size(), 2u);
  EXPECT_FALSE(r.failed);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.initial_theta.gamma1(), 0.4);
  EXPECT_EQ(r.initial_theta.gamma2(), 0.8);
  EXPECT_EQ(r.theta.values(), r.episodes.back().theta.values());
  EXPECT_NE(r.theta.values(), r.initial_theta.values());
}

TEST(HarnessTest, ResumingFromAThetaFileIsDeterministic) {
  TempDir dir;
  HarnessConfig c = QuickConfig();
  const ConditionResult first = TrainCondition(c, {0.4, 0.8}, 1);
  WriteTextFile(dir.Sub("theta.json"), ThetaToJson(first.theta, kDefaultGammaMin).dump());
  c.theta.file = dir.Sub("theta.json");
  const ConditionResult a = TrainCondition(c, {0.6, 0.6}, 1);
  const ConditionResult b = TrainCondition(c, {0.6, 0.6}, 1);
  // The file's forgetting factors win over the condition.
  EXPECT_EQ(a.initial_theta.values(), first.theta.values());
  EXPECT_EQ(a.theta.values(), b.theta.values());
  EXPECT_EQ(a.episodes.front().mean_loss, b.episodes.front().mean_loss);
}

// ---------------------------------------------------------------------------
// Commands.

TEST(CommandTest, SimulateIsByteReproducibleAndReplays) {
  TempDir dir;
  std::ostringstream sink;
  const HarnessConfig c = QuickConfig();
  ASSERT_EQ(RunSimulate(c, QuietContext(dir.Sub("a"), sink)), ExitCode::kSuccess);
  ASSERT_EQ(RunSimulate(c, QuietContext(dir.Sub("b"), sink)), ExitCode::kSuccess);
  const std::string a = ReadTextFile(dir.Sub("a/episode.csv"));
  EXPECT_EQ(a, ReadTextFile(dir.Sub("b/episode.csv")));
  EXPECT_EQ(a.substr(0, a.find('\n')), EpisodeCsvHeader());

  const json m = json::parse(ReadTextFile(dir.Sub("a/manifest.json")));
  EXPECT_EQ(m.at("command"), "simulate");
  EXPECT_EQ(m.at("csv_schema_version"), kCsvSchemaVersion);
  EXPECT_EQ(m.at("seed"), c.seed);
  EXPECT_EQ(m.at("status"), "success");
  EXPECT_EQ(m.at("config"), ConfigToJson(c));
  EXPECT_TRUE(m.contains("git_revision"));
  EXPECT_TRUE(m.at("timing_ms").contains("solve"));

  std::ostringstream out;
  EXPECT_EQ(RunReplay(dir.Sub("a/manifest.json"), QuietContext(dir.Sub("r"), out)),
            ExitCode::kSuccess);
  EXPECT_NE(out.str().find("1/1 artifacts identical"), std::string::npos) << out.str();

  // A tampered artifact is detected.
  WriteTextFile(dir.Sub("a/episode.csv"), a + "x\n");
  EXPECT_EQ(RunReplay(dir.Sub("a/manifest.json"), QuietContext(dir.Sub("s"), out)),
            ExitCode::kVerificationFailure);
}

TEST(CommandTest, TrainWritesArtifactsPerCondition) {
  TempDir dir;
  std::ostringstream sink;
  HarnessConfig c = QuickConfig();
  c.learning.episodes = 1;
  c.learning.initial_conditions = {{0.4, 0.8}, {0.8, 0.6}};
  ASSERT_EQ(RunTrain(c, QuietContext(dir.Sub("t"), sink)), ExitCode::kSuccess);
  for (const char* f : {"training_trace.csv", "episodes.csv", "theta_c0.json", "theta_c1.json",
                        "manifest.json"}) {
    EXPECT_TRUE(fs::exists(dir.Sub(std::string("t/") + f))) << f;
  }
  const ThetaParams t = ThetaFromJson(json::parse(ReadTextFile(dir.Sub("t/theta_c1.json"))));
  EXPECT_TRUE(t.IsValid(kDefaultGammaMin));
}

TEST(CommandTest, GradcheckFailsWhenTheForcingSignIsFlipped) {
  HarnessConfig c;
  c.gradcheck.instances = 5;
  std::ostringstream sink;
  EXPECT_EQ(RunGradcheck(c, QuietContext("", sink)), ExitCode::kSuccess) << sink.str();
  c.gradcheck.flip_e_sign = true;
  EXPECT_EQ(RunGradcheck(c, QuietContext("", sink)), ExitCode::kVerificationFailure);
}

}  // namespace
}  // namespace dmhe
