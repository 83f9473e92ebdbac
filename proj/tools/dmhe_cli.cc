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

// Command-line entry point: simulate, train, gradcheck, bench, replay.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "dmhe/config.h"
#include "dmhe/harness.h"

namespace {

int Code(dmhe::ExitCode c) { return static_cast<int>(c); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable moving horizon estimation: simulation, training and checks"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  std::string scenario;
  app.add_option("--config", config_path, "JSON config (defaults when omitted); a manifest for replay");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "overrides the config seed");
  app.add_option("--workers", workers, "parallel episodes or instances")->check(CLI::PositiveNumber);
  app.add_option("--scenario", scenario, "overrides scenario.name")
      ->check(CLI::IsMember(dmhe::ScenarioConfig::Names()));

  CLI::App* simulate = app.add_subcommand("simulate", "run one closed-loop episode with a fixed theta");
  CLI::App* train = app.add_subcommand("train", "tune theta (or the policy networks) over episodes");
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "verify the analytic gradient against oracles");
  CLI::App* bench = app.add_subcommand("bench", "time the sensitivity engine for several horizons");
  CLI::App* replay = app.add_subcommand("replay", "re-run a manifest and compare its CSV output");
  CLI::App* defaults = app.add_subcommand("default-config", "print the default config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : Code(dmhe::ExitCode::kConfigError);
  }

  std::string command_line;
  for (int i = 0; i < argc; ++i) command_line += (i ? " " : "") + std::string(argv[i]);
  dmhe::CommandContext ctx;
  ctx.out_dir = out_dir;
  ctx.workers = workers;
  ctx.command_line = command_line;

  try {
    if (defaults->parsed()) {
      std::cout << dmhe::ConfigToJson(dmhe::HarnessConfig{}).dump(2) << "\n";
      return 0;
    }
    if (replay->parsed()) {
      if (config_path.empty()) throw dmhe::ConfigError("replay needs --config <manifest.json>");
      if (ctx.out_dir.empty()) throw dmhe::ConfigError("replay needs --out <directory>");
      return Code(dmhe::RunReplay(config_path, ctx));
    }
    dmhe::HarnessConfig config =
        config_path.empty() ? dmhe::HarnessConfig{} : dmhe::LoadConfig(config_path);
    if (seed) config.seed = *seed;
    if (!scenario.empty()) config.scenario.name = scenario;
    config.Validate();
    if (simulate->parsed()) {
      if (ctx.out_dir.empty()) throw dmhe::ConfigError("simulate needs --out <directory>");
      return Code(dmhe::RunSimulate(config, ctx));
    }
    if (train->parsed()) {
      if (ctx.out_dir.empty()) throw dmhe::ConfigError("train needs --out <directory>");
      return Code(dmhe::RunTrain(config, ctx));
    }
    if (gradcheck->parsed()) return Code(dmhe::RunGradcheck(config, ctx));
    if (bench->parsed()) return Code(dmhe::RunBench(config, ctx));
  } catch (const dmhe::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return Code(dmhe::ExitCode::kConfigError);
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return Code(dmhe::ExitCode::kDivergence);
  }
  return Code(dmhe::ExitCode::kConfigError);
}
