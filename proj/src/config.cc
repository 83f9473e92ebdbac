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

#include "dmhe/config.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace dmhe {
namespace {

using nlohmann::json;

json Vec3(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

// Reads one JSON object, tracking which keys were consumed so that unknown
// keys can be rejected.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(Name("") + ": expected an object");
  }

  template <typename T>
  T Get(const std::string& key) {
    const json& v = At(key);
    try {
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(Name(key) + ": wrong type (" + e.what() + ")");
    }
  }

  Eigen::Vector3d GetVec3(const std::string& key) {
    const auto v = Get<std::vector<double>>(key);
    if (v.size() != 3) throw ConfigError(Name(key) + ": expected 3 numbers");
    return {v[0], v[1], v[2]};
  }

  std::array<double, 2> GetPair(const std::string& key) {
    const auto v = Get<std::vector<double>>(key);
    if (v.size() != 2) throw ConfigError(Name(key) + ": expected 2 numbers");
    return {v[0], v[1]};
  }

  template <typename T>
  T GetEnum(const std::string& key, const std::vector<std::pair<std::string, T>>& options) {
    const std::string s = Get<std::string>(key);
    std::string names;
    for (const auto& [name, value] : options) {
      if (name == s) return value;
      names += (names.empty() ? "" : ", ") + name;
    }
    throw ConfigError(Name(key) + ": unknown value '" + s + "' (expected one of " + names + ")");
  }

  Section Sub(const std::string& key) { return Section(At(key), Name(key)); }

  // Throws on keys that were never read.
  void Finish() const {
    for (const auto& item : j_.items()) {
      if (!used_.count(item.key())) throw ConfigError(Name(item.key()) + ": unknown key");
    }
  }

  std::string Name(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const json& At(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError("missing key " + Name(key));
    used_.insert(key);
    return j_.at(key);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

const std::vector<std::pair<std::string, TruthModel>> kTruthNames = {
    {"rk4", TruthModel::kRk4}, {"euler", TruthModel::kEuler}};
const std::vector<std::pair<std::string, ControlLaw>> kLawNames = {
    {"geometric", ControlLaw::kGeometric}, {"pd_baseline", ControlLaw::kPdBaseline}};
const std::vector<std::pair<std::string, HeadingMode>> kHeadingNames = {
    {"fixed", HeadingMode::kFixed}, {"tangent", HeadingMode::kTangent}};
const std::vector<std::pair<std::string, ChainRule>> kChainRuleNames = {
    {"direct", ChainRule::kDirect}, {"closed_loop", ChainRule::kClosedLoop}};

template <typename T>
std::string EnumName(const std::vector<std::pair<std::string, T>>& options, T value) {
  for (const auto& [name, v] : options) {
    if (v == value) return name;
  }
  return "unknown";
}

std::vector<std::string> StringOptions(const std::vector<std::string>& names) { return names; }

std::string OneOf(Section& s, const std::string& key, const std::vector<std::string>& names) {
  const std::string v = s.Get<std::string>(key);
  if (std::find(names.begin(), names.end(), v) == names.end()) {
    std::string all;
    for (const auto& n : names) all += (all.empty() ? "" : ", ") + n;
    throw ConfigError(s.Name(key) + ": unknown value '" + v + "' (expected one of " + all + ")");
  }
  return v;
}

void Require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

// ---------------------------------------------------------------------------
// Scenario, theta and learning helpers.

const std::vector<std::string>& ScenarioConfig::Names() {
  static const std::vector<std::string> names = {"composite", "nominal", "payload", "downwash"};
  return names;
}

double ScenarioConfig::Duration() const {
  if (name == "composite") return composite_duration;
  if (name == "nominal") return nominal_duration;
  if (name == "payload") return payload_duration;
  if (name == "downwash") return downwash_duration;
  throw ConfigError("scenario.name: unknown scenario '" + name + "'");
}

std::unique_ptr<ReferenceTrajectory> ScenarioConfig::Reference() const {
  if (name == "composite" || name == "nominal") {
    return std::make_unique<LemniscateReference>(lemniscate);
  }
  if (name == "payload" || name == "downwash") return std::make_unique<HoverReference>(hover);
  throw ConfigError("scenario.name: unknown scenario '" + name + "'");
}

DisturbanceProfile ScenarioConfig::Disturbance() const {
  if (name == "composite") return DisturbanceProfile::Composite();
  if (name == "nominal") return DisturbanceProfile::None();
  if (name == "payload") {
    return DisturbanceProfile::PayloadRelease(payload_weight, payload_release_time,
                                              payload_ground_effect);
  }
  if (name == "downwash") {
    return DisturbanceProfile::Downwash(downwash_magnitude, downwash_onset, downwash_fluctuation,
                                        downwash_ground_effect);
  }
  throw ConfigError("scenario.name: unknown scenario '" + name + "'");
}

ThetaParams ThetaConfig::Build() const {
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("theta.file: cannot open '" + file + "'");
    try {
      return ThetaFromJson(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("theta.file: " + std::string(e.what()));
    }
  }
  return ThetaParams::Uniform(ThetaLayout{}, p, gamma1, r, gamma2, q);
}

LossConfig LearningConfig::Loss() const {
  LossConfig loss;
  loss.kappa.setZero();
  loss.kappa.segment<3>(state::kPos).setConstant(kappa_position);
  loss.kappa.segment<3>(state::kVel).setConstant(kappa_velocity);
  loss.beta = beta;
  return loss;
}

std::vector<int> LearningConfig::Mask(const ThetaLayout& layout) const {
  if (mask == "all") return {};
  if (mask == "force_estimation") return ForceEstimationMask(layout);
  throw ConfigError("learning.mask: unknown value '" + mask + "'");
}

// ---------------------------------------------------------------------------
// HarnessConfig.

ClosedLoopSetup HarnessConfig::Setup() const {
  ClosedLoopSetup s;
  s.sim = sim;
  s.sim.seed = seed;
  s.sim.duration = scenario.Duration();
  s.params = quadrotor;
  s.gains = gains;
  s.control = control;
  s.theta = theta.Build();
  s.mhe = mhe;
  s.attitude_feedforward = attitude_feedforward;
  return s;
}

TrainingConfig HarnessConfig::Training() const {
  TrainingConfig t;
  t.chain_rule = learning.chain_rule;
  t.loss = learning.Loss();
  t.rates = learning.rates;
  t.gamma_min = learning.gamma_min;
  t.mask = learning.Mask(ThetaLayout{});
  t.gradient.max_kkt_residual = learning.max_kkt_residual;
  return t;
}

PolicyConfig HarnessConfig::Policy(const ThetaLayout& layout) const {
  const PolicyTrainingConfig& pc = learning.policy;
  PolicyConfig p;
  p.loss = learning.Loss();
  p.mask = learning.mask == "all" ? ForceEstimationMask(layout) : learning.Mask(layout);
  p.theta_bounds = ThetaBounds(layout, p.mask, pc.p_bounds[0], pc.p_bounds[1], pc.rq_bounds[0],
                               pc.rq_bounds[1], pc.gamma_bounds[0], pc.gamma_bounds[1]);
  Eigen::VectorXd lo(6), hi(6);
  lo << Eigen::Vector3d::Constant(pc.kp_bounds[0]), Eigen::Vector3d::Constant(pc.kv_bounds[0]);
  hi << Eigen::Vector3d::Constant(pc.kp_bounds[1]), Eigen::Vector3d::Constant(pc.kv_bounds[1]);
  p.gain_bounds = BoundedRatioMap(lo, hi);
  p.learning_rate = pc.learning_rate;
  p.adam_epsilon = pc.adam_epsilon;
  p.hidden = pc.hidden;
  p.seed = pc.seed;
  p.gradient.max_kkt_residual = learning.max_kkt_residual;
  return p;
}

void HarnessConfig::Validate() const {
  const auto wrap = [](const std::string& section, const auto& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(section + ": " + e.what());
    }
  };
  Require(std::find(ScenarioConfig::Names().begin(), ScenarioConfig::Names().end(),
                    scenario.name) != ScenarioConfig::Names().end(),
          "scenario.name: unknown scenario '" + scenario.name + "'");
  wrap("sim", [&] { Setup().sim.Validate(); });
  wrap("quadrotor", [&] { quadrotor.Validate(); });
  wrap("control", [&] { gains.Validate(); });
  Require(control.max_motor_ratio > 1.0, "control.max_motor_ratio: must exceed 1");
  Require(mhe.tolerance > 0.0 && mhe.max_iterations > 0 && mhe.max_line_search > 0,
          "mhe: tolerance and iteration limits must be positive");
  wrap("theta", [&] { theta.Build().Validate(learning.gamma_min); });
  wrap("learning", [&] { learning.Loss().Validate(); });
  Require(learning.mode == "theta" || learning.mode == "policy",
          "learning.mode: expected 'theta' or 'policy'");
  Require(learning.mask == "all" || learning.mask == "force_estimation",
          "learning.mask: expected 'all' or 'force_estimation'");
  Require(learning.episodes >= 1, "learning.episodes: must be at least 1");
  Require(learning.convergence_tolerance >= 0.0, "learning.convergence_tolerance: negative");
  Require(learning.trace_stride >= 1, "learning.trace_stride: must be at least 1");
  Require(!learning.initial_conditions.empty(), "learning.initial_conditions: empty");
  for (const auto& c : learning.initial_conditions) {
    Require(c[0] > learning.gamma_min && c[0] < 1.0 && c[1] > learning.gamma_min && c[1] < 1.0,
            "learning.initial_conditions: forgetting factors must lie in (gamma_min, 1)");
  }
  const PolicyTrainingConfig& pc = learning.policy;
  Require(pc.learning_rate > 0.0 && pc.adam_epsilon > 0.0 && pc.hidden >= 1,
          "learning.policy: learning_rate, adam_epsilon and hidden must be positive");
  for (const auto& [name, b] : {std::pair{"kp_bounds", pc.kp_bounds}, {"kv_bounds", pc.kv_bounds},
                                {"p_bounds", pc.p_bounds}, {"rq_bounds", pc.rq_bounds},
                                {"gamma_bounds", pc.gamma_bounds}}) {
    Require(b[0] < b[1], std::string("learning.policy.") + name + ": lower must be below upper");
  }
  Require(gradcheck.horizon >= 3, "gradcheck.horizon: must be at least 3");
  Require(gradcheck.instances >= 1, "gradcheck.instances: must be at least 1");
  Require(gradcheck.snapshot_step >= gradcheck.horizon,
          "gradcheck.snapshot_step: must be at least the horizon");
  Require(gradcheck.fd_relative_step > 0.0, "gradcheck.fd_relative_step: must be positive");
  Require(!bench.horizons.empty() && bench.horizons.size() == bench.reference_ms.size(),
          "bench: horizons and reference_ms must be non-empty and of equal length");
  for (int n : bench.horizons) Require(n >= 2, "bench.horizons: every horizon must be >= 2");
  Require(bench.duration > 0.0, "bench.duration: must be positive");
}

// ---------------------------------------------------------------------------
// JSON.

nlohmann::json ConfigToJson(const HarnessConfig& c) {
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["seed"] = c.seed;
  j["sim"] = {{"dt", c.sim.dt},
              {"sim_dt", c.sim.sim_dt},
              {"measurement_variance", c.sim.measurement_variance},
              {"process_variance", c.sim.process_variance},
              {"horizon", c.sim.horizon},
              {"truth", EnumName(kTruthNames, c.sim.truth)},
              {"divergence_radius", c.sim.divergence_radius},
              {"ground_contact", c.sim.ground_contact},
              {"attitude_feedforward", c.attitude_feedforward}};
  j["quadrotor"] = {{"mass", c.quadrotor.mass},
                    {"inertia", Vec3(c.quadrotor.inertia)},
                    {"arm_length", c.quadrotor.arm_length},
                    {"thrust_coeff", c.quadrotor.thrust_coeff},
                    {"drag_coeff", c.quadrotor.drag_coeff},
                    {"gravity", c.quadrotor.gravity}};
  j["control"] = {{"law", EnumName(kLawNames, c.control.law)},
                  {"feedforward", c.control.feedforward},
                  {"max_motor_ratio", c.control.max_motor_ratio},
                  {"kp", Vec3(c.gains.kp)},
                  {"kv", Vec3(c.gains.kv)},
                  {"kr", Vec3(c.gains.kr)},
                  {"kw", Vec3(c.gains.kw)}};
  j["mhe"] = {{"tolerance", c.mhe.tolerance},
              {"max_iterations", c.mhe.max_iterations},
              {"armijo", c.mhe.armijo},
              {"max_line_search", c.mhe.max_line_search}};
  j["theta"] = {{"p", c.theta.p},         {"gamma1", c.theta.gamma1}, {"r", c.theta.r},
                {"gamma2", c.theta.gamma2}, {"q", c.theta.q},         {"file", c.theta.file}};
  const ScenarioConfig& s = c.scenario;
  j["scenario"] = {
      {"name", s.name},
      {"lemniscate",
       {{"scale", s.lemniscate.scale},
        {"period", s.lemniscate.period},
        {"ramp_time", s.lemniscate.ramp_time},
        {"altitude", s.lemniscate.takeoff.altitude},
        {"takeoff_time", s.lemniscate.takeoff.takeoff_time},
        {"heading", EnumName(kHeadingNames, s.lemniscate.heading)}}},
      {"hover", {{"altitude", s.hover.altitude}, {"takeoff_time", s.hover.takeoff_time}}},
      {"composite", {{"duration", s.composite_duration}}},
      {"nominal", {{"duration", s.nominal_duration}}},
      {"payload",
       {{"duration", s.payload_duration},
        {"weight", s.payload_weight},
        {"release_time", s.payload_release_time},
        {"ground_effect", s.payload_ground_effect}}},
      {"downwash",
       {{"duration", s.downwash_duration},
        {"magnitude", s.downwash_magnitude},
        {"onset", s.downwash_onset},
        {"fluctuation", s.downwash_fluctuation},
        {"ground_effect", s.downwash_ground_effect}}}};
  const LearningConfig& l = c.learning;
  json conditions = json::array();
  for (const auto& ic : l.initial_conditions) conditions.push_back({ic[0], ic[1]});
  const PolicyTrainingConfig& pc = l.policy;
  j["learning"] = {
      {"mode", l.mode},
      {"chain_rule", EnumName(kChainRuleNames, l.chain_rule)},
      {"kappa_position", l.kappa_position},
      {"kappa_velocity", l.kappa_velocity},
      {"beta", l.beta},
      {"rates", {{"p", l.rates.p}, {"gamma", l.rates.gamma}, {"r", l.rates.r}, {"q", l.rates.q}}},
      {"gamma_min", l.gamma_min},
      {"mask", l.mask},
      {"episodes", l.episodes},
      {"convergence_tolerance", l.convergence_tolerance},
      {"max_kkt_residual", l.max_kkt_residual},
      {"initial_conditions", conditions},
      {"trace_stride", l.trace_stride},
      {"policy",
       {{"learning_rate", pc.learning_rate},
        {"adam_epsilon", pc.adam_epsilon},
        {"hidden", pc.hidden},
        {"seed", pc.seed},
        {"kp_bounds", pc.kp_bounds},
        {"kv_bounds", pc.kv_bounds},
        {"p_bounds", pc.p_bounds},
        {"rq_bounds", pc.rq_bounds},
        {"gamma_bounds", pc.gamma_bounds}}}};
  const GradcheckConfig& g = c.gradcheck;
  j["gradcheck"] = {{"horizon", g.horizon},
                    {"instances", g.instances},
                    {"snapshot_step", g.snapshot_step},
                    {"solver_tolerance", g.solver_tolerance},
                    {"fd_relative_step", g.fd_relative_step},
                    {"gradient_tolerance", g.gradient_tolerance},
                    {"oracle_tolerance", g.oracle_tolerance},
                    {"residual_tolerance", g.residual_tolerance},
                    {"flip_e_sign", g.flip_e_sign}};
  j["bench"] = {{"horizons", c.bench.horizons},
                {"reference_ms", c.bench.reference_ms},
                {"envelope_factor", c.bench.envelope_factor},
                {"duration", c.bench.duration},
                {"min_r_squared", c.bench.min_r_squared}};
  return j;
}

HarnessConfig ConfigFromJson(const nlohmann::json& j) {
  HarnessConfig c;
  Section root(j, "");
  const int version = root.Get<int>("schema_version");
  if (version != kConfigSchemaVersion) {
    throw ConfigError("schema_version: unsupported version " + std::to_string(version));
  }
  c.seed = root.Get<std::uint64_t>("seed");

  Section sim = root.Sub("sim");
  c.sim.dt = sim.Get<double>("dt");
  c.sim.sim_dt = sim.Get<double>("sim_dt");
  c.sim.measurement_variance = sim.Get<double>("measurement_variance");
  c.sim.process_variance = sim.Get<double>("process_variance");
  c.sim.horizon = sim.Get<int>("horizon");
  c.sim.truth = sim.GetEnum("truth", kTruthNames);
  c.sim.divergence_radius = sim.Get<double>("divergence_radius");
  c.sim.ground_contact = sim.Get<bool>("ground_contact");
  c.attitude_feedforward = sim.Get<bool>("attitude_feedforward");
  sim.Finish();

  Section quad = root.Sub("quadrotor");
  c.quadrotor.mass = quad.Get<double>("mass");
  c.quadrotor.inertia = quad.GetVec3("inertia");
  c.quadrotor.arm_length = quad.Get<double>("arm_length");
  c.quadrotor.thrust_coeff = quad.Get<double>("thrust_coeff");
  c.quadrotor.drag_coeff = quad.Get<double>("drag_coeff");
  c.quadrotor.gravity = quad.Get<double>("gravity");
  quad.Finish();

  Section ctl = root.Sub("control");
  c.control.law = ctl.GetEnum("law", kLawNames);
  c.control.feedforward = ctl.Get<bool>("feedforward");
  c.control.max_motor_ratio = ctl.Get<double>("max_motor_ratio");
  c.gains.kp = ctl.GetVec3("kp");
  c.gains.kv = ctl.GetVec3("kv");
  c.gains.kr = ctl.GetVec3("kr");
  c.gains.kw = ctl.GetVec3("kw");
  ctl.Finish();

  Section mhe = root.Sub("mhe");
  c.mhe.tolerance = mhe.Get<double>("tolerance");
  c.mhe.max_iterations = mhe.Get<int>("max_iterations");
  c.mhe.armijo = mhe.Get<double>("armijo");
  c.mhe.max_line_search = mhe.Get<int>("max_line_search");
  mhe.Finish();

  Section th = root.Sub("theta");
  c.theta.p = th.Get<double>("p");
  c.theta.gamma1 = th.Get<double>("gamma1");
  c.theta.r = th.Get<double>("r");
  c.theta.gamma2 = th.Get<double>("gamma2");
  c.theta.q = th.Get<double>("q");
  c.theta.file = th.Get<std::string>("file");
  th.Finish();

  Section sc = root.Sub("scenario");
  ScenarioConfig& s = c.scenario;
  s.name = OneOf(sc, "name", StringOptions(ScenarioConfig::Names()));
  {
    Section lem = sc.Sub("lemniscate");
    s.lemniscate.scale = lem.Get<double>("scale");
    s.lemniscate.period = lem.Get<double>("period");
    s.lemniscate.ramp_time = lem.Get<double>("ramp_time");
    s.lemniscate.takeoff.altitude = lem.Get<double>("altitude");
    s.lemniscate.takeoff.takeoff_time = lem.Get<double>("takeoff_time");
    s.lemniscate.heading = lem.GetEnum("heading", kHeadingNames);
    lem.Finish();
    Section hov = sc.Sub("hover");
    s.hover.altitude = hov.Get<double>("altitude");
    s.hover.takeoff_time = hov.Get<double>("takeoff_time");
    hov.Finish();
    Section comp = sc.Sub("composite");
    s.composite_duration = comp.Get<double>("duration");
    comp.Finish();
    Section nom = sc.Sub("nominal");
    s.nominal_duration = nom.Get<double>("duration");
    nom.Finish();
    Section pay = sc.Sub("payload");
    s.payload_duration = pay.Get<double>("duration");
    s.payload_weight = pay.Get<double>("weight");
    s.payload_release_time = pay.Get<double>("release_time");
    s.payload_ground_effect = pay.Get<bool>("ground_effect");
    pay.Finish();
    Section dw = sc.Sub("downwash");
    s.downwash_duration = dw.Get<double>("duration");
    s.downwash_magnitude = dw.Get<double>("magnitude");
    s.downwash_onset = dw.Get<double>("onset");
    s.downwash_fluctuation = dw.Get<double>("fluctuation");
    s.downwash_ground_effect = dw.Get<bool>("ground_effect");
    dw.Finish();
  }
  sc.Finish();

  Section le = root.Sub("learning");
  LearningConfig& l = c.learning;
  l.mode = OneOf(le, "mode", {"theta", "policy"});
  l.chain_rule = le.GetEnum("chain_rule", kChainRuleNames);
  l.kappa_position = le.Get<double>("kappa_position");
  l.kappa_velocity = le.Get<double>("kappa_velocity");
  l.beta = le.Get<double>("beta");
  {
    Section rates = le.Sub("rates");
    l.rates.p = rates.Get<double>("p");
    l.rates.gamma = rates.Get<double>("gamma");
    l.rates.r = rates.Get<double>("r");
    l.rates.q = rates.Get<double>("q");
    rates.Finish();
  }
  l.gamma_min = le.Get<double>("gamma_min");
  l.mask = OneOf(le, "mask", {"all", "force_estimation"});
  l.episodes = le.Get<int>("episodes");
  l.convergence_tolerance = le.Get<double>("convergence_tolerance");
  l.max_kkt_residual = le.Get<double>("max_kkt_residual");
  {
    const auto ics = le.Get<std::vector<std::vector<double>>>("initial_conditions");
    l.initial_conditions.clear();
    for (const auto& ic : ics) {
      if (ic.size() != 2) {
        throw ConfigError("learning.initial_conditions: every entry must be [gamma1, gamma2]");
      }
      l.initial_conditions.push_back({ic[0], ic[1]});
    }
  }
  l.trace_stride = le.Get<int>("trace_stride");
  {
    Section pol = le.Sub("policy");
    PolicyTrainingConfig& pc = l.policy;
    pc.learning_rate = pol.Get<double>("learning_rate");
    pc.adam_epsilon = pol.Get<double>("adam_epsilon");
    pc.hidden = pol.Get<int>("hidden");
    pc.seed = pol.Get<std::uint64_t>("seed");
    pc.kp_bounds = pol.GetPair("kp_bounds");
    pc.kv_bounds = pol.GetPair("kv_bounds");
    pc.p_bounds = pol.GetPair("p_bounds");
    pc.rq_bounds = pol.GetPair("rq_bounds");
    pc.gamma_bounds = pol.GetPair("gamma_bounds");
    pol.Finish();
  }
  le.Finish();

  Section gc = root.Sub("gradcheck");
  GradcheckConfig& g = c.gradcheck;
  g.horizon = gc.Get<int>("horizon");
  g.instances = gc.Get<int>("instances");
  g.snapshot_step = gc.Get<int>("snapshot_step");
  g.solver_tolerance = gc.Get<double>("solver_tolerance");
  g.fd_relative_step = gc.Get<double>("fd_relative_step");
  g.gradient_tolerance = gc.Get<double>("gradient_tolerance");
  g.oracle_tolerance = gc.Get<double>("oracle_tolerance");
  g.residual_tolerance = gc.Get<double>("residual_tolerance");
  g.flip_e_sign = gc.Get<bool>("flip_e_sign");
  gc.Finish();

  Section be = root.Sub("bench");
  c.bench.horizons = be.Get<std::vector<int>>("horizons");
  c.bench.reference_ms = be.Get<std::vector<double>>("reference_ms");
  c.bench.envelope_factor = be.Get<double>("envelope_factor");
  c.bench.duration = be.Get<double>("duration");
  c.bench.min_r_squared = be.Get<double>("min_r_squared");
  be.Finish();

  root.Finish();
  return c;
}

namespace {

json ParseJson(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // The library reports "line L, column C" in the message.
    throw ConfigError(std::string("config syntax error: ") + e.what());
  }
}

}  // namespace

HarnessConfig ParseConfig(const std::string& text) {
  HarnessConfig c = ConfigFromJson(ParseJson(text));
  c.Validate();
  return c;
}

HarnessConfig LoadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    HarnessConfig c = ConfigFromJson(ParseJson(ss.str()));
    ResolvePaths(c, std::filesystem::path(path).parent_path().string());
    c.Validate();
    return c;
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void ResolvePaths(HarnessConfig& config, const std::string& base_dir) {
  if (config.theta.file.empty()) return;
  const std::filesystem::path p(config.theta.file);
  if (p.is_relative() && !base_dir.empty()) {
    config.theta.file = (std::filesystem::path(base_dir) / p).lexically_normal().string();
  }
}

}  // namespace dmhe
