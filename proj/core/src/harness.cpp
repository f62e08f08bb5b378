// Copyright 2026 The FlashSpec Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "flashspec/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <utility>

#include "flashspec/error.hpp"
#include "flashspec/numeric.hpp"

#ifndef FLASHSPEC_DEFAULT_PRESET_DIR
#define FLASHSPEC_DEFAULT_PRESET_DIR "presets"
#endif

namespace flashspec {

using nlohmann::json;

std::string policy_name(Policy policy) {
  switch (policy) {
    case Policy::kFlashAr: return "flash_ar";
    case Policy::kChainSd: return "chain_sd";
    case Policy::kBalancedTree: return "balanced_tree";
    case Policy::kLever: return "lever";
    case Policy::kLeverNoPrune: return "lever_noprune";
  }
  return "unknown";
}

Policy parse_policy(const std::string& name) {
  for (Policy p : {Policy::kFlashAr, Policy::kChainSd, Policy::kBalancedTree,
                   Policy::kLever, Policy::kLeverNoPrune}) {
    if (policy_name(p) == name) return p;
  }
  throw ConfigError("unknown policy '" + name + "'");
}

void validate(const ExperimentConfig& c) {
  const ModelSpec& m = c.model;
  if (m.type != "layered" && m.type != "tabular") {
    throw ConfigError("model.type must be 'layered' or 'tabular'");
  }
  if (m.vocab < 2) throw ConfigError("model.vocab must be >= 2");
  if (m.context < 1) throw ConfigError("model.context must be >= 1");
  if (m.type == "layered" && (m.layers < 2 || m.hidden < 1)) {
    throw ConfigError("layered model needs layers >= 2 and hidden >= 1");
  }
  if (c.draft_model.mixing != "linear" && c.draft_model.mixing != "geometric") {
    throw ConfigError("draft_model.mixing must be 'linear' or 'geometric'");
  }
  if (!(c.draft_model.alpha >= 0.0 && c.draft_model.alpha <= 1.0)) {
    throw ConfigError("draft_model.alpha must lie in [0, 1]");
  }
  validate(c.drafting);
  if (c.drafting.k > m.vocab) throw ConfigError("drafting.k exceeds the vocabulary");
  if (c.chain_length < 1) throw ConfigError("drafting.chain_length must be >= 1");
  if (c.balanced_branching < 1 || c.balanced_budget < 1) {
    throw ConfigError("balanced tree needs branching >= 1 and budget >= 1");
  }
  if (!(c.reliability.beta >= 0.0 && c.reliability.beta < 1.0) ||
      !(c.reliability.r_min > 0.0 && c.reliability.r_min <= 1.0)) {
    throw ConfigError("reliability: beta in [0, 1) and r_min in (0, 1] required");
  }
  validate(c.pruning);
  validate(c.train);
  if (c.predictor_layer < 0 ||
      (m.type == "layered" && c.predictor_layer >= m.layers)) {
    throw ConfigError("predictor.layer must lie in [1, layers)");
  }
  if (c.dataset.count < 1 || c.dataset.prefix_length < 1) {
    throw ConfigError("predictor.dataset needs count >= 1 and prefix_length >= 1");
  }
  if (c.horizon < 1 || c.prompt_length < 1 || c.trials < 1) {
    throw ConfigError("run: horizon, prompt_length and trials must be >= 1");
  }
  if (!c.hardware_overrides.is_object()) {
    throw ConfigError("hardware.overrides must be an object");
  }
}

json config_to_json(const ExperimentConfig& c) {
  const DraftConfig& d = c.drafting;
  const PruneConfig& p = c.pruning;
  const TrainConfig& t = c.train;
  return {
      {"model",
       {{"type", c.model.type},
        {"vocab", c.model.vocab},
        {"context", c.model.context},
        {"layers", c.model.layers},
        {"hidden", c.model.hidden},
        {"sharpness", c.model.sharpness},
        {"logit_scale", c.model.logit_scale},
        {"seed", c.model.seed}}},
      {"draft_model",
       {{"mixing", c.draft_model.mixing},
        {"alpha", c.draft_model.alpha},
        {"sharpness", c.draft_model.sharpness},
        {"seed", c.draft_model.seed}}},
      {"policy", policy_name(c.policy)},
      {"drafting",
       {{"k", d.k},
        {"max_depth", d.max_depth},
        {"b_min", d.b_min},
        {"max_nodes", d.max_nodes},
        {"stopping_rule", d.stopping_rule},
        {"cost_floor_ms", d.cost_floor_ms},
        {"chain_length", c.chain_length},
        {"balanced_branching", c.balanced_branching},
        {"balanced_budget", c.balanced_budget}}},
      {"reliability",
       {{"r", c.reliability.r},
        {"beta", c.reliability.beta},
        {"r_min", c.reliability.r_min}}},
      {"pruning",
       {{"theta", p.theta},
        {"tau_e", p.tau_e},
        {"root_keep", p.root_keep},
        {"min_keep_frac", p.min_keep_frac},
        {"min_leaves", p.min_leaves},
        {"max_depth", p.max_depth}}},
      {"predictor",
       {{"layer", c.predictor_layer},
        {"checkpoint", c.predictor_checkpoint},
        {"dataset",
         {{"count", c.dataset.count},
          {"prefix_length", c.dataset.prefix_length},
          {"seed", c.dataset.seed}}},
        {"train",
         {{"tau_kd", t.tau_kd},
          {"tau_cand", t.tau_cand},
          {"lambda_cand", t.lambda_cand},
          {"learning_rate", t.learning_rate},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"seed", t.seed}}}}},
      {"hardware",
       {{"preset", c.preset},
        {"preset_dir", c.preset_dir},
        {"overrides", c.hardware_overrides}}},
      {"run",
       {{"horizon", c.horizon},
        {"prompt_length", c.prompt_length},
        {"trials", c.trials},
        {"seed", c.seed}}},
  };
}

namespace {

// Reads known keys out of one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!doc_.contains(key)) return;
    try {
      out = doc_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  void require(const char* key) const {
    if (!doc_.contains(key)) {
      throw ConfigError(path_ + "." + key + " is required");
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return doc_.contains(key);
  }

  Section sub(const char* key) {
    seen_.insert(key);
    return Section(doc_.at(key), path_ + "." + key);
  }

  const json& raw(const char* key) {
    seen_.insert(key);
    return doc_.at(key);
  }

  void finish() const {
    for (const auto& item : doc_.items()) {
      if (!seen_.count(item.key())) {
        throw ConfigError("unknown config key " + path_ + "." + item.key());
      }
    }
  }

 private:
  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

ExperimentConfig config_from_json(const json& input) {
  const json& doc = input.contains("config") && input.contains("config_hash")
                        ? input.at("config")
                        : input;
  ExperimentConfig c;
  Section top(doc, "config");
  top.require("run");
  top.require("model");
  top.require("draft_model");

  {
    Section s = top.sub("model");
    s.require("seed");
    s.read("type", c.model.type);
    s.read("vocab", c.model.vocab);
    s.read("context", c.model.context);
    s.read("layers", c.model.layers);
    s.read("hidden", c.model.hidden);
    s.read("sharpness", c.model.sharpness);
    s.read("logit_scale", c.model.logit_scale);
    s.read("seed", c.model.seed);
    s.finish();
  }
  {
    Section s = top.sub("draft_model");
    s.require("seed");
    s.read("mixing", c.draft_model.mixing);
    s.read("alpha", c.draft_model.alpha);
    s.read("sharpness", c.draft_model.sharpness);
    s.read("seed", c.draft_model.seed);
    s.finish();
  }
  if (top.has("policy")) {
    std::string name;
    top.read("policy", name);
    c.policy = parse_policy(name);
  }
  if (top.has("drafting")) {
    Section s = top.sub("drafting");
    s.read("k", c.drafting.k);
    s.read("max_depth", c.drafting.max_depth);
    s.read("b_min", c.drafting.b_min);
    s.read("max_nodes", c.drafting.max_nodes);
    s.read("stopping_rule", c.drafting.stopping_rule);
    s.read("cost_floor_ms", c.drafting.cost_floor_ms);
    s.read("chain_length", c.chain_length);
    s.read("balanced_branching", c.balanced_branching);
    s.read("balanced_budget", c.balanced_budget);
    s.finish();
  }
  if (top.has("reliability")) {
    Section s = top.sub("reliability");
    s.read("r", c.reliability.r);
    s.read("beta", c.reliability.beta);
    s.read("r_min", c.reliability.r_min);
    s.finish();
  }
  if (top.has("pruning")) {
    Section s = top.sub("pruning");
    s.read("theta", c.pruning.theta);
    s.read("tau_e", c.pruning.tau_e);
    s.read("root_keep", c.pruning.root_keep);
    s.read("min_keep_frac", c.pruning.min_keep_frac);
    s.read("min_leaves", c.pruning.min_leaves);
    s.read("max_depth", c.pruning.max_depth);
    s.finish();
  }
  if (top.has("predictor")) {
    Section s = top.sub("predictor");
    s.read("layer", c.predictor_layer);
    s.read("checkpoint", c.predictor_checkpoint);
    if (s.has("dataset")) {
      Section ds = s.sub("dataset");
      ds.read("count", c.dataset.count);
      ds.read("prefix_length", c.dataset.prefix_length);
      ds.read("seed", c.dataset.seed);
      ds.finish();
    }
    if (s.has("train")) {
      Section ts = s.sub("train");
      ts.read("tau_kd", c.train.tau_kd);
      ts.read("tau_cand", c.train.tau_cand);
      ts.read("lambda_cand", c.train.lambda_cand);
      ts.read("learning_rate", c.train.learning_rate);
      ts.read("epochs", c.train.epochs);
      ts.read("batch_size", c.train.batch_size);
      ts.read("seed", c.train.seed);
      ts.finish();
    }
    s.finish();
  }
  if (top.has("hardware")) {
    Section s = top.sub("hardware");
    s.read("preset", c.preset);
    s.read("preset_dir", c.preset_dir);
    if (s.has("overrides")) c.hardware_overrides = s.raw("overrides");
    s.finish();
  }
  {
    Section s = top.sub("run");
    s.require("seed");
    s.read("horizon", c.horizon);
    s.read("prompt_length", c.prompt_length);
    s.read("trials", c.trials);
    s.read("seed", c.seed);
    s.finish();
  }
  if (top.has("output")) {
    Section s = top.sub("output");
    std::string dir;
    s.read("dir", dir);
    if (!dir.empty()) c.output_dir = dir;
    s.finish();
  }
  top.finish();
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

void apply_override(json& doc, const std::string& dotted_key,
                    const std::string& value) {
  if (dotted_key.empty()) throw ConfigError("empty override key");
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted_key.find('.', start);
    const std::string part = dotted_key.substr(start, dot - start);
    if (part.empty()) throw ConfigError("malformed override key '" + dotted_key + "'");
    if (!node->is_object()) {
      throw ConfigError("override '" + dotted_key + "' descends into a non-object");
    }
    if (dot == std::string::npos) {
      json parsed = json::parse(value, nullptr, false);
      (*node)[part] = parsed.is_discarded() ? json(value) : parsed;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = config_to_json(config).dump();
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << fnv1a64(std::span<const char>(text.data(), text.size()));
  return out.str();
}

std::filesystem::path resolve_preset_path(const ExperimentConfig& config) {
  std::filesystem::path name = config.preset;
  if (name.extension() != ".json") name += ".json";
  if (name.has_parent_path() && std::filesystem::exists(name)) return name;

  std::vector<std::filesystem::path> dirs;
  if (!config.preset_dir.empty()) dirs.emplace_back(config.preset_dir);
  if (const char* env = std::getenv("FLASHSPEC_PRESET_DIR")) dirs.emplace_back(env);
  dirs.emplace_back(FLASHSPEC_DEFAULT_PRESET_DIR);
  for (const auto& dir : dirs) {
    const auto candidate = dir / name;
    if (std::filesystem::exists(candidate)) return candidate;
  }
  throw ConfigError("hardware preset '" + config.preset + "' not found");
}

HardwareConfig resolve_hardware(const ExperimentConfig& config) {
  const auto path = resolve_preset_path(config);
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read hardware preset " + path.string());
  json doc = json::parse(in);
  for (const auto& item : config.hardware_overrides.items()) {
    doc[item.key()] = item.value();
  }
  return hardware_from_json(doc);
}

ModelBundle make_models(const ExperimentConfig& config) {
  validate(config);
  ModelBundle out;
  const ModelSpec& m = config.model;
  if (m.type == "layered") {
    LayeredConfig lc;
    lc.vocab = m.vocab;
    lc.context = m.context;
    lc.layers = m.layers;
    lc.hidden = m.hidden;
    lc.logit_scale = m.logit_scale;
    lc.seed = m.seed;
    out.layered = std::make_shared<LayeredTargetModel>(lc);
    out.target = out.layered;
  } else {
    TabularConfig tc;
    tc.vocab = m.vocab;
    tc.order = m.context;
    tc.sharpness = m.sharpness;
    tc.seed = m.seed;
    out.target = std::make_shared<TabularMarkovModel>(tc);
  }
  TabularConfig noise;
  noise.vocab = m.vocab;
  noise.order = m.context;
  noise.sharpness = config.draft_model.sharpness;
  noise.seed = config.draft_model.seed;
  out.draft = std::make_shared<MixtureDraftModel>(
      out.target, config.draft_model.alpha, noise,
      config.draft_model.mixing == "geometric" ? Mixing::kGeometric
                                               : Mixing::kLinear);
  return out;
}

int predictor_layer(const ExperimentConfig& config) {
  if (config.predictor_layer > 0) return config.predictor_layer;
  return (config.model.layers + 1) / 2;
}

TrainedPredictor train_predictor(const ExperimentConfig& config,
                                 const ModelBundle& models) {
  if (!config.predictor_checkpoint.empty()) {
    return {EarlyExitPredictor::load(config.predictor_checkpoint), std::nullopt};
  }
  if (!models.layered) {
    throw ConfigError("predictor training needs a layered target model");
  }
  const int layer = predictor_layer(config);
  DatasetSpec spec = config.dataset;
  spec.candidates = config.drafting.k;
  const auto data = generate_dataset(*models.layered, *models.draft, layer, spec);
  DatasetSpec held_out = spec;
  held_out.count = std::max(1, spec.count / 4);
  held_out.seed = mix_seed(spec.seed, 0x68656c64);
  const auto eval = generate_dataset(*models.layered, *models.draft, layer, held_out);

  const EarlyExitPredictor zero(config.model.vocab, config.model.hidden, layer);
  TrainResult result = train(zero, data, config.train);
  PredictorReport report;
  report.initial_loss = result.initial_loss;
  report.final_loss = result.loss_curve.empty() ? result.initial_loss
                                                : result.loss_curve.back();
  report.initial_agreement = candidate_agreement(zero, eval);
  report.final_agreement = candidate_agreement(result.predictor, eval);
  return {std::move(result.predictor), report};
}

SimulationOptions simulation_options(Policy policy) {
  switch (policy) {
    case Policy::kFlashAr:
      return {Overlap::kSum, ProjectionMode::kFolded};
    case Policy::kChainSd:
    case Policy::kBalancedTree:
      return {Overlap::kMax, ProjectionMode::kEager};
    case Policy::kLever:
    case Policy::kLeverNoPrune:
      return {Overlap::kMax, ProjectionMode::kOnDemand};
  }
  return {};
}

LatencyProfile offline_profile(const HardwareConfig& hardware, int max_nodes) {
  LatencyProfile profile;
  for (int n = 1; n <= max_nodes; ++n) {
    for (int l = 1; l <= n; ++l) {
      profile.seed({n, l}, verify_latency(hardware, TreeShape{n, l}));
    }
  }
  return profile;
}

std::vector<TokenId> trial_prompt(const ExperimentConfig& config, int trial) {
  std::mt19937_64 rng(mix_seed(config.seed + static_cast<std::uint64_t>(trial),
                               0x70726f6d));
  std::uniform_int_distribution<TokenId> pick(0, config.model.vocab - 1);
  std::vector<TokenId> prompt(static_cast<std::size_t>(config.prompt_length));
  for (auto& t : prompt) t = pick(rng);
  return prompt;
}

namespace {

constexpr int kProfileNodes = 256;

}  // namespace

TrialOutcome run_trial(const ExperimentConfig& config, const ModelBundle& models,
                       const HardwareConfig& hardware,
                       const EarlyExitPredictor* predictor, int trial,
                       std::function<void(const CycleView&)> observer) {
  DecodeOptions opts;
  opts.observer = std::move(observer);
  opts.draft = config.drafting;
  opts.chain_length = config.chain_length;
  opts.balanced_branching = config.balanced_branching;
  opts.balanced_budget = config.balanced_budget;
  opts.prune = config.pruning;
  opts.reliability = config.reliability;

  std::unique_ptr<BranchScorer> scorer;
  switch (config.policy) {
    case Policy::kFlashAr: opts.policy = TreePolicy::kAutoregressive; break;
    case Policy::kChainSd: opts.policy = TreePolicy::kChain; break;
    case Policy::kBalancedTree: opts.policy = TreePolicy::kBalanced; break;
    case Policy::kLever:
      opts.policy = TreePolicy::kGreedy;
      if (models.layered) {
        if (predictor == nullptr) {
          throw ConfigError("lever on a layered target needs a predictor");
        }
        scorer = std::make_unique<PredictorScorer>(*models.layered, *predictor);
      } else {
        scorer = std::make_unique<DraftProbabilityScorer>();
      }
      opts.scorer = scorer.get();
      break;
    case Policy::kLeverNoPrune: opts.policy = TreePolicy::kGreedy; break;
  }

  const SimulationOptions sim_opts = simulation_options(config.policy);
  if (opts.policy == TreePolicy::kGreedy) {
    opts.profile = offline_profile(hardware, kProfileNodes);
    opts.initial_draft_ms = hardware.draft_cpu_ms;
    opts.measure_verify = [&hardware, &sim_opts](TreeShape built,
                                                 TreeShape verified) {
      return verify_latency(hardware, built, verified, sim_opts.verify_overlap);
    };
    opts.measure_draft = [&hardware](std::span<const int> counts) {
      return draft_schedule(counts, hardware);
    };
  }

  TrialOutcome out;
  out.trial = trial;
  out.seed = config.seed + static_cast<std::uint64_t>(trial);
  const auto prompt = trial_prompt(config, trial);
  out.decode = run_decode(*models.target, *models.draft, prompt, config.horizon, opts);
  out.tokens = out.decode.tokens;
  out.simulation = simulate_decode(out.decode, hardware, sim_opts);
  return out;
}

double geometric_mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double log_sum = 0.0;
  for (double v : values) {
    if (v < 0.0) throw ContractError("geometric mean of a negative value");
    if (v == 0.0) return 0.0;
    log_sum += std::log(v);
  }
  return std::exp(log_sum / static_cast<double>(values.size()));
}

Aggregate aggregate(std::span<const Metrics> trials) {
  Aggregate a;
  if (trials.empty()) return a;
  auto collect = [&](double Metrics::*field) {
    std::vector<double> v;
    v.reserve(trials.size());
    for (const Metrics& m : trials) v.push_back(m.*field);
    return v;
  };
  a.tokens_per_s = geometric_mean(collect(&Metrics::tokens_per_s));
  a.mean_accepted_len = geometric_mean(collect(&Metrics::mean_accepted_len));
  a.target_calls_per_token = geometric_mean(collect(&Metrics::target_calls_per_token));
  a.speedup_vs_flash_ar = geometric_mean(collect(&Metrics::speedup_vs_flash_ar));
  double waste = 0.0;
  for (const Metrics& m : trials) waste += m.waste_fraction;
  a.waste_fraction = waste / static_cast<double>(trials.size());
  return a;
}

Report run_experiment(const ExperimentConfig& config) {
  validate(config);
  Report report;
  report.config = config;
  report.config_hash = config_hash(config);
  report.hardware = resolve_hardware(config);
  const ModelBundle models = make_models(config);

  std::optional<EarlyExitPredictor> predictor;
  if (config.policy == Policy::kLever && models.layered) {
    TrainedPredictor trained = train_predictor(config, models);
    predictor = std::move(trained.predictor);
    report.predictor = trained.report;
  }

  std::vector<Metrics> metrics;
  for (int t = 0; t < config.trials; ++t) {
    report.trials.push_back(run_trial(config, models, report.hardware,
                                      predictor ? &*predictor : nullptr, t));
    metrics.push_back(report.trials.back().simulation.metrics);
  }
  report.aggregate = aggregate(metrics);
  return report;
}

namespace {

json metrics_json(const Metrics& m) {
  return {{"tokens_per_s", m.tokens_per_s},
          {"mean_accepted_len", m.mean_accepted_len},
          {"target_calls_per_token", m.target_calls_per_token},
          {"waste_fraction", m.waste_fraction},
          {"speedup_vs_flash_ar", m.speedup_vs_flash_ar},
          {"emitted", m.emitted},
          {"cycles", m.cycles}};
}

json aggregate_json(const Aggregate& a) {
  return {{"tokens_per_s", a.tokens_per_s},
          {"mean_accepted_len", a.mean_accepted_len},
          {"target_calls_per_token", a.target_calls_per_token},
          {"speedup_vs_flash_ar", a.speedup_vs_flash_ar},
          {"waste_fraction", a.waste_fraction}};
}

// Shortest round-trip text, identical to the JSON report's numbers.
std::string num(double v) { return json(v).dump(); }

}  // namespace

json report_to_json(const Report& r) {
  json trials = json::array();
  json trial_seeds = json::array();
  for (const TrialOutcome& t : r.trials) {
    json row = metrics_json(t.simulation.metrics);
    row["trial"] = t.trial;
    row["seed"] = t.seed;
    row["total_ms"] = t.simulation.trace.total_ms;
    trials.push_back(row);
    trial_seeds.push_back(t.seed);
  }
  json predictor = nullptr;
  if (r.predictor) {
    predictor = {{"initial_loss", r.predictor->initial_loss},
                 {"final_loss", r.predictor->final_loss},
                 {"initial_agreement", r.predictor->initial_agreement},
                 {"final_agreement", r.predictor->final_agreement}};
  }
  return {{"config", config_to_json(r.config)},
          {"config_hash", r.config_hash},
          {"seeds",
           {{"run", r.config.seed},
            {"trials", trial_seeds},
            {"model", r.config.model.seed},
            {"draft_model", r.config.draft_model.seed},
            {"dataset", r.config.dataset.seed},
            {"train", r.config.train.seed}}},
          {"hardware", hardware_to_json(r.hardware)},
          {"flash_ar_ms_per_token", ar_step_latency(r.hardware)},
          {"predictor", predictor},
          {"trials", trials},
          {"aggregate", aggregate_json(r.aggregate)}};
}

std::string report_csv(const Report& r) {
  std::ostringstream out;
  out << "trial,seed,emitted,cycles,tokens_per_s,mean_accepted_len,"
         "target_calls_per_token,waste_fraction,speedup_vs_flash_ar\n";
  for (const TrialOutcome& t : r.trials) {
    const Metrics& m = t.simulation.metrics;
    out << t.trial << ',' << t.seed << ',' << m.emitted << ',' << m.cycles << ','
        << num(m.tokens_per_s) << ',' << num(m.mean_accepted_len) << ','
        << num(m.target_calls_per_token) << ',' << num(m.waste_fraction) << ','
        << num(m.speedup_vs_flash_ar) << '\n';
  }
  const Aggregate& a = r.aggregate;
  out << "aggregate,,,," << num(a.tokens_per_s) << ',' << num(a.mean_accepted_len)
      << ',' << num(a.target_calls_per_token) << ',' << num(a.waste_fraction)
      << ',' << num(a.speedup_vs_flash_ar) << '\n';
  return out.str();
}

std::string trace_csv(const Report& r) {
  std::ostringstream out;
  out << "trial,cycle,accepted_len,full_accepted_len,emitted,nodes,leaves,"
         "verified_nodes,verified_leaves,expansions,pruning_applied,"
         "prune_rejected,reliability,draft_ms,verify_io_ms,verify_compute_ms,"
         "verify_ms,projection_ms,projections_eager,projections_ondemand,"
         "waste_ms,total_ms\n";
  for (const TrialOutcome& t : r.trials) {
    const auto& records = t.decode.cycles;
    const auto& costs = t.simulation.trace.cycles;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const CycleRecord& rec = records[i];
      const CycleCost& cc = costs[i];
      out << t.trial << ',' << rec.cycle << ',' << rec.accepted_len << ','
          << rec.full_accepted_len << ',' << rec.emitted << ','
          << rec.shape.nodes << ',' << rec.shape.leaves << ','
          << rec.verified_shape.nodes << ',' << rec.verified_shape.leaves << ','
          << rec.expansions << ',' << int(rec.pruning_applied) << ','
          << int(rec.prune_rejected) << ',' << num(rec.reliability) << ','
          << num(cc.draft_ms) << ',' << num(cc.verify_io_ms) << ','
          << num(cc.verify_compute_ms) << ',' << num(cc.verify_ms) << ','
          << num(cc.projection_ms) << ',' << cc.projections_eager << ','
          << cc.projections_ondemand << ',' << num(cc.waste_ms) << ','
          << num(cc.total_ms) << '\n';
    }
  }
  return out.str();
}

void write_report(const Report& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + (dir / name).string());
    out << text;
  };
  write("report.json", report_to_json(report).dump(2) + "\n");
  write("report.csv", report_csv(report));
  write("trace.csv", trace_csv(report));
}

ProjectionCalibration calibrate_projection(const ExperimentConfig& config,
                                           double fraction) {
  ExperimentConfig c = config;
  c.policy = Policy::kBalancedTree;
  validate(c);
  const HardwareConfig hardware = resolve_hardware(c);
  const ModelBundle models = make_models(c);
  ProjectionCalibration out;
  double rows = 0.0;
  double used = 0.0;
  double verify = 0.0;
  for (int t = 0; t < c.trials; ++t) {
    const TrialOutcome trial = run_trial(c, models, hardware, nullptr, t);
    const auto& costs = trial.simulation.trace.cycles;
    for (const CycleCost& cc : costs) {
      rows += cc.rows_after_prune;
      used += cc.accepted_len + 1;
      verify += cc.verify_ms;
      ++out.cycles;
    }
  }
  if (out.cycles == 0) throw ConfigError("calibration produced no cycles");
  out.mean_rows = rows / out.cycles;
  out.mean_used_rows = used / out.cycles;
  out.mean_verify_ms = verify / out.cycles;
  out.proj_ms_per_row = calibrate_projection_rate(
      fraction, out.mean_verify_ms, out.mean_rows, out.mean_used_rows);
  return out;
}

Comparison compare_policies(const std::vector<ExperimentConfig>& configs,
                            Policy baseline) {
  if (configs.empty()) throw ConfigError("compare needs at least one config");
  auto shared = [](const ExperimentConfig& c) {
    json doc = config_to_json(c);
    return json{{"model", doc["model"]},
                {"draft_model", doc["draft_model"]},
                {"hardware", hardware_to_json(resolve_hardware(c))},
                {"run", doc["run"]}};
  };
  const json reference = shared(configs.front());
  bool has_baseline = false;
  for (const ExperimentConfig& c : configs) {
    const json s = shared(c);
    for (const auto& item : reference.items()) {
      if (s[item.key()] != item.value()) {
        throw ConfigError("compare: configs differ in '" + item.key() + "'");
      }
    }
    has_baseline |= c.policy == baseline;
  }
  if (!has_baseline) {
    throw ConfigError("compare: no config runs baseline policy " +
                      policy_name(baseline));
  }

  Comparison out;
  out.baseline = baseline;
  double base_rate = 0.0;
  for (const ExperimentConfig& c : configs) {
    const Report report = run_experiment(c);
    ComparisonRow row;
    row.policy = c.policy;
    row.aggregate = report.aggregate;
    for (const TrialOutcome& t : report.trials) row.tokens.push_back(t.tokens);
    if (c.policy == baseline && base_rate == 0.0) base_rate = row.aggregate.tokens_per_s;
    out.rows.push_back(std::move(row));
  }
  for (ComparisonRow& row : out.rows) {
    row.normalized_tokens_per_s =
        base_rate > 0.0 ? row.aggregate.tokens_per_s / base_rate : 0.0;
  }
  return out;
}

std::string comparison_table(const Comparison& cmp) {
  std::ostringstream out;
  out << "policy,tokens_per_s,mean_accepted_len,target_calls_per_token,"
         "speedup_vs_flash_ar,normalized_to_"
      << policy_name(cmp.baseline) << '\n';
  for (const ComparisonRow& row : cmp.rows) {
    const Aggregate& a = row.aggregate;
    out << policy_name(row.policy) << ',' << num(a.tokens_per_s) << ','
        << num(a.mean_accepted_len) << ',' << num(a.target_calls_per_token) << ','
        << num(a.speedup_vs_flash_ar) << ',' << num(row.normalized_tokens_per_s)
        << '\n';
  }
  return out.str();
}

json comparison_to_json(const Comparison& cmp) {
  json rows = json::array();
  for (const ComparisonRow& row : cmp.rows) {
    json r = aggregate_json(row.aggregate);
    r["policy"] = policy_name(row.policy);
    r["normalized_tokens_per_s"] = row.normalized_tokens_per_s;
    rows.push_back(r);
  }
  return {{"baseline", policy_name(cmp.baseline)}, {"rows", rows}};
}

}  // namespace flashspec
