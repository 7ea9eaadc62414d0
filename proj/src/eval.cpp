/*
 * Copyright 2026 The mdda-lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "mdda/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

namespace mdda::eval {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kSourceStreamBase = 0x1000;
constexpr std::uint64_t kCombinedStream = 0x2000;

json shape_to_json(const NetworkShape& s) {
  return {{"hidden", s.hidden},
          {"activation", nn::to_string(s.activation)},
          {"slope", s.slope},
          {"final_activation", nn::to_string(s.final_activation)}};
}

NetworkShape shape_from_json(const json& j, const NetworkShape& defaults) {
  NetworkShape s = defaults;
  if (j.contains("hidden")) s.hidden = j.at("hidden").get<std::vector<int>>();
  if (j.contains("activation")) s.activation = nn::activation_from_string(j.at("activation").get<std::string>());
  s.slope = j.value("slope", s.slope);
  if (j.contains("final_activation"))
    s.final_activation = nn::final_activation_from_string(j.at("final_activation").get<std::string>());
  return s;
}

json train_to_json(const pipeline::TrainConfig& t) {
  return {{"steps", t.steps}, {"batch_size", t.batch_size}, {"lr", t.lr}, {"beta1", t.beta1}, {"beta2", t.beta2}};
}

pipeline::TrainConfig train_from_json(const json& j, pipeline::TrainConfig t) {
  t.steps = j.value("steps", t.steps);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.lr = j.value("lr", t.lr);
  t.beta1 = j.value("beta1", t.beta1);
  t.beta2 = j.value("beta2", t.beta2);
  return t;
}

json domain_entry_to_json(const DomainEntry& e) { return {{"domain", data::to_json(e.spec)}, {"n", e.n}}; }

DomainEntry domain_entry_from_json(const json& j) {
  DomainEntry e;
  e.spec = data::domain_spec_from_json(j.at("domain"));
  e.n = j.value("n", e.n);
  return e;
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size())
    throw std::invalid_argument("eval: accuracy length mismatch (" + std::to_string(predicted.size()) + " vs " +
                                std::to_string(truth.size()) + ")");
  if (predicted.empty()) throw std::invalid_argument("eval: accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

nn::MlpConfig NetworkShape::config(int in, int out) const {
  nn::MlpConfig c;
  c.widths.push_back(in);
  c.widths.insert(c.widths.end(), hidden.begin(), hidden.end());
  if (out > 0) c.widths.push_back(out);
  c.activation = activation;
  c.slope = slope;
  c.final_activation = final_activation;
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (schema_version != kSchemaVersion)
    throw std::invalid_argument("eval: unsupported schema_version " + std::to_string(schema_version));
  if (sources.empty()) throw std::invalid_argument("eval: at least one source domain is required");
  if (repeat < 1) throw std::invalid_argument("eval: repeat must be >= 1");
  if (extractor.hidden.empty()) throw std::invalid_argument("eval: extractor needs at least one layer");
  target.spec.validate();
  if (target.n < 2) throw std::invalid_argument("eval: the target needs at least two samples for the adapt/test split");
  std::set<std::string> names;
  for (const auto& s : sources) {
    s.spec.validate();
    if (s.spec.name.empty() || !names.insert(s.spec.name).second)
      throw std::invalid_argument("eval: source names must be non-empty and unique (got '" + s.spec.name + "')");
    if (s.n < 2) throw std::invalid_argument("eval: source '" + s.spec.name + "' needs at least two samples");
    if (s.spec.d != target.spec.d || s.spec.n_classes != target.spec.n_classes)
      throw std::invalid_argument("eval: source '" + s.spec.name + "' does not share d and n_classes with the target");
  }
  pretrain.validate();
  adapt.validate();
  distill.train.validate();
}

nn::MlpConfig ExperimentConfig::extractor_config() const { return extractor.config(target.spec.d, 0); }

nn::MlpConfig ExperimentConfig::classifier_config() const {
  return classifier.config(extractor.hidden.back(), target.spec.n_classes);
}

std::vector<std::string> ExperimentConfig::variants() const {
  std::vector<std::string> v{"mdda"};
  if (ablations.uniform) v.push_back("uniform");
  if (ablations.no_distill) v.push_back("no_distill");
  if (ablations.source_combined) v.push_back("source_combined");
  if (ablations.single_best) v.push_back("single_best");
  return v;
}

json to_json(const ExperimentConfig& cfg) {
  json sources = json::array();
  for (const auto& s : cfg.sources) sources.push_back(domain_entry_to_json(s));
  const auto& a = cfg.adapt;
  json distill = train_to_json(cfg.distill.train);
  distill["enabled"] = cfg.distill_enabled;
  distill["fraction"] = cfg.distill.fraction;
  distill["rule"] = pipeline::to_string(cfg.distill.rule);
  return {{"schema_version", cfg.schema_version},
          {"master_seed", cfg.master_seed},
          {"repeat", cfg.repeat},
          {"sources", sources},
          {"target", domain_entry_to_json(cfg.target)},
          {"extractor", shape_to_json(cfg.extractor)},
          {"classifier", shape_to_json(cfg.classifier)},
          {"pretrain", train_to_json(cfg.pretrain)},
          {"adapt",
           {{"alpha", a.alpha},
            {"n_critic", a.n_critic},
            {"steps", a.steps},
            {"final_critic_steps", a.final_critic_steps},
            {"batch_size", a.batch_size},
            {"lr_critic", a.lr_critic},
            {"lr_encoder", a.lr_encoder},
            {"beta1", a.beta1},
            {"beta2", a.beta2},
            {"include_endpoints", a.include_endpoints},
            {"critic_hidden", a.critic_hidden},
            {"critic_slope", a.critic_slope}}},
          {"distill", distill},
          {"ablations",
           {{"uniform", cfg.ablations.uniform},
            {"no_distill", cfg.ablations.no_distill},
            {"source_combined", cfg.ablations.source_combined},
            {"single_best", cfg.ablations.single_best}}}};
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig cfg;
  try {
    if (!j.contains("schema_version")) throw std::invalid_argument("eval: config is missing schema_version");
    cfg.schema_version = j.at("schema_version").get<int>();
    cfg.master_seed = j.value("master_seed", cfg.master_seed);
    cfg.repeat = j.value("repeat", cfg.repeat);
    for (const auto& s : j.at("sources")) cfg.sources.push_back(domain_entry_from_json(s));
    cfg.target = domain_entry_from_json(j.at("target"));
    if (j.contains("extractor")) cfg.extractor = shape_from_json(j.at("extractor"), cfg.extractor);
    if (j.contains("classifier")) cfg.classifier = shape_from_json(j.at("classifier"), cfg.classifier);
    if (j.contains("pretrain")) cfg.pretrain = train_from_json(j.at("pretrain"), cfg.pretrain);
    if (j.contains("adapt")) {
      const json& a = j.at("adapt");
      auto& c = cfg.adapt;
      c.alpha = a.value("alpha", c.alpha);
      c.n_critic = a.value("n_critic", c.n_critic);
      c.steps = a.value("steps", c.steps);
      c.final_critic_steps = a.value("final_critic_steps", c.final_critic_steps);
      c.batch_size = a.value("batch_size", c.batch_size);
      c.lr_critic = a.value("lr_critic", c.lr_critic);
      c.lr_encoder = a.value("lr_encoder", c.lr_encoder);
      c.beta1 = a.value("beta1", c.beta1);
      c.beta2 = a.value("beta2", c.beta2);
      c.include_endpoints = a.value("include_endpoints", c.include_endpoints);
      if (a.contains("critic_hidden")) c.critic_hidden = a.at("critic_hidden").get<std::vector<int>>();
      c.critic_slope = a.value("critic_slope", c.critic_slope);
    }
    if (j.contains("distill")) {
      const json& d = j.at("distill");
      cfg.distill.train = train_from_json(d, cfg.distill.train);
      cfg.distill_enabled = d.value("enabled", cfg.distill_enabled);
      cfg.distill.fraction = d.value("fraction", cfg.distill.fraction);
      if (d.contains("rule")) cfg.distill.rule = pipeline::distill_rule_from_string(d.at("rule").get<std::string>());
    }
    if (j.contains("ablations")) {
      const json& a = j.at("ablations");
      cfg.ablations.uniform = a.value("uniform", false);
      cfg.ablations.no_distill = a.value("no_distill", false);
      cfg.ablations.source_combined = a.value("source_combined", false);
      cfg.ablations.single_best = a.value("single_best", false);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("eval: malformed config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("eval: cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw std::invalid_argument("eval: " + path.string() + " is not valid JSON: " + e.what());
  }
  return experiment_config_from_json(j);
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string s = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return hex16(h);
}

VariantSummary summarize(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("eval: cannot summarize zero values");
  VariantSummary s;
  s.values.assign(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

std::uint64_t trial_seed(std::uint64_t master_seed, int trial) {
  Rng master(master_seed);
  std::uint64_t s = 0;
  for (int t = 0; t <= trial; ++t) s = master.next();
  return s;
}

TrialData generate_trial_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  Rng data_rng = Rng(seed).fork(stream::kData);
  TrialData out;
  for (const auto& s : cfg.sources) out.sources.push_back(data::sample_domain(s.spec, s.n, data_rng));
  const data::Dataset tgt = data::sample_domain(cfg.target.spec, cfg.target.n, data_rng);
  const std::size_t half = tgt.size() / 2;
  out.target_adapt = tgt.slice(0, half);
  out.target_test = tgt.slice(half, tgt.size());
  out.target_adapt.domain_name = cfg.target.spec.name + "_adapt";
  out.target_test.domain_name = cfg.target.spec.name + "_test";
  return out;
}

Rng stage_stream(std::uint64_t seed, std::size_t source, int stage) {
  Rng per_source = Rng(seed).fork(kSourceStreamBase + source);
  return per_source.fork(static_cast<std::uint64_t>(stage));
}

TrialResult run_trial(const ExperimentConfig& cfg, int trial, TrialArtifacts* artifacts, const ProgressFn& progress) {
  cfg.validate();
  const std::uint64_t seed = trial_seed(cfg.master_seed, trial);
  TrialArtifacts local;
  TrialArtifacts& art = artifacts ? *artifacts : local;
  art = TrialArtifacts{};
  art.data = generate_trial_data(cfg, seed);
  const auto& tgt_adapt = art.data.target_adapt.x;
  const auto& test = art.data.target_test;

  const nn::MlpConfig f_cfg = cfg.extractor_config();
  const nn::MlpConfig c_cfg = cfg.classifier_config();
  std::vector<pipeline::SourceBundle> pretrained;
  for (std::size_t i = 0; i < cfg.sources.size(); ++i) {
    const auto& src = art.data.sources[i];
    const std::string where = "trial " + std::to_string(trial) + ", source " + cfg.sources[i].spec.name;
    int stage = 1;
    try {
      if (progress) progress(where + ": pretraining");
      Rng r1 = stage_stream(seed, i, 1);
      pipeline::SourceBundle b = pipeline::pretrain_source(src, f_cfg, c_cfg, cfg.pretrain, r1);
      b.name = cfg.sources[i].spec.name;
      pretrained.push_back(b);
      stage = 2;
      if (progress) progress(where + ": adapting");
      Rng r2 = stage_stream(seed, i, 2);
      art.adapted.push_back(pipeline::adapt_target(b, src, tgt_adapt, cfg.adapt, r2));
      if (cfg.distill_enabled) {
        stage = 3;
        if (progress) progress(where + ": distilling");
        Rng r3 = stage_stream(seed, i, 3);
        const auto sel = pipeline::distill_select(pipeline::sample_distances(art.adapted.back(), src, tgt_adapt),
                                                  cfg.distill.fraction, cfg.distill.rule);
        art.distilled.push_back(pipeline::distill_finetune(art.adapted.back(), src, sel, cfg.distill.train, r3));
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("eval: " + where + ", stage " + std::to_string(stage) + ": " + e.what());
    }
  }

  const auto& final_bundles = cfg.distill_enabled ? art.distilled : art.adapted;
  std::vector<double> wd;
  for (const auto& b : art.adapted) wd.push_back(*b.wd_estimate);
  art.weights = pipeline::domain_weight(wd);

  TrialResult r;
  r.trial = trial;
  r.seed = seed;
  for (std::size_t i = 0; i < final_bundles.size(); ++i) {
    SourceResult s;
    s.name = final_bundles[i].name;
    s.wd_estimate = wd[i];
    s.raw_weight = art.weights.raw[i];
    s.normalized_weight = art.weights.normalized[i];
    s.solo_accuracy = accuracy(pipeline::predict_source(final_bundles[i], test.x).labels, test.y);
    const auto& a = art.adapted[i];
    s.checksums["extractor"] = hex16(pipeline::checksum(a.extractor));
    s.checksums["classifier_pretrained"] = hex16(pipeline::checksum(pretrained[i].classifier));
    s.checksums["target_encoder"] = hex16(pipeline::checksum(*a.target_encoder));
    s.checksums["critic"] = hex16(pipeline::checksum(*a.critic));
    if (cfg.distill_enabled) s.checksums["classifier_distilled"] = hex16(pipeline::checksum(art.distilled[i].classifier));
    r.sources.push_back(std::move(s));
  }

  auto record = [&](const std::string& name, pipeline::Prediction p) {
    r.accuracy[name] = accuracy(p.labels, test.y);
    art.predictions[name] = std::move(p);
  };
  record("mdda", pipeline::aggregate_predict(final_bundles, art.weights, test.x));
  if (cfg.ablations.uniform) record("uniform", pipeline::baseline_uniform(final_bundles, test.x));
  if (cfg.ablations.no_distill) record("no_distill", pipeline::aggregate_predict(art.adapted, art.weights, test.x));
  if (cfg.ablations.source_combined) {
    if (progress) progress("trial " + std::to_string(trial) + ": source-combined baseline");
    Rng rc = Rng(seed).fork(kCombinedStream);
    try {
      const auto combined = pipeline::baseline_source_combined(art.data.sources, tgt_adapt, f_cfg, c_cfg, cfg.pretrain,
                                                               cfg.adapt, rc);
      record("source_combined", pipeline::predict_source(combined, test.x));
    } catch (const std::exception& e) {
      throw std::runtime_error("eval: trial " + std::to_string(trial) + ", source-combined baseline: " + e.what());
    }
  }
  if (cfg.ablations.single_best) {
    std::vector<double> solo;
    for (const auto& s : r.sources) solo.push_back(s.solo_accuracy);
    r.accuracy["single_best"] = pipeline::baseline_single_best(solo);
  }
  return r;
}

Report run_experiment(const ExperimentConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  Report rep;
  rep.master_seed = cfg.master_seed;
  rep.config_hash = config_hash(cfg);
  rep.variants = cfg.variants();
  for (int t = 0; t < cfg.repeat; ++t) rep.trials.push_back(run_trial(cfg, t, nullptr, progress));
  for (const auto& v : rep.variants) {
    std::vector<double> values;
    for (const auto& t : rep.trials) values.push_back(t.accuracy.at(v));
    rep.aggregate[v] = summarize(values);
  }
  return rep;
}

json to_json(const Report& r) {
  json trials = json::array();
  for (const auto& t : r.trials) {
    json sources = json::array();
    for (const auto& s : t.sources)
      sources.push_back({{"name", s.name},
                         {"wd_estimate", s.wd_estimate},
                         {"raw_weight", s.raw_weight},
                         {"normalized_weight", s.normalized_weight},
                         {"solo_accuracy", s.solo_accuracy},
                         {"checksums", s.checksums}});
    trials.push_back({{"trial", t.trial}, {"seed", t.seed}, {"accuracy", t.accuracy}, {"sources", sources}});
  }
  json aggregate = json::object();
  for (const auto& [name, s] : r.aggregate) aggregate[name] = {{"mean", s.mean}, {"std", s.std}, {"values", s.values}};
  return {{"schema_version", r.schema_version},
          {"master_seed", r.master_seed},
          {"config_hash", r.config_hash},
          {"variants", r.variants},
          {"trials", trials},
          {"aggregate", aggregate}};
}

Report report_from_json(const json& j) {
  Report r;
  r.schema_version = j.at("schema_version").get<int>();
  if (r.schema_version != kSchemaVersion)
    throw std::invalid_argument("eval: unsupported report schema_version " + std::to_string(r.schema_version));
  r.master_seed = j.at("master_seed").get<std::uint64_t>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.variants = j.at("variants").get<std::vector<std::string>>();
  for (const auto& t : j.at("trials")) {
    TrialResult tr;
    tr.trial = t.at("trial").get<int>();
    tr.seed = t.at("seed").get<std::uint64_t>();
    tr.accuracy = t.at("accuracy").get<std::map<std::string, double>>();
    for (const auto& s : t.at("sources")) {
      SourceResult sr;
      sr.name = s.at("name").get<std::string>();
      sr.wd_estimate = s.at("wd_estimate").get<double>();
      sr.raw_weight = s.at("raw_weight").get<double>();
      sr.normalized_weight = s.at("normalized_weight").get<double>();
      sr.solo_accuracy = s.at("solo_accuracy").get<double>();
      sr.checksums = s.at("checksums").get<std::map<std::string, std::string>>();
      tr.sources.push_back(std::move(sr));
    }
    r.trials.push_back(std::move(tr));
  }
  for (const auto& [name, s] : j.at("aggregate").items()) {
    VariantSummary vs;
    vs.mean = s.at("mean").get<double>();
    vs.std = s.at("std").get<double>();
    vs.values = s.at("values").get<std::vector<double>>();
    r.aggregate[name] = std::move(vs);
  }
  return r;
}

void export_report(const Report& r, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream os(dir / "report.json");
    if (!os) throw std::runtime_error("eval: cannot write " + (dir / "report.json").string());
    os << to_json(r).dump(2) << "\n";
    if (!os) throw std::runtime_error("eval: write failed for " + (dir / "report.json").string());
  }
  std::ofstream os(dir / "summary.csv");
  if (!os) throw std::runtime_error("eval: cannot write " + (dir / "summary.csv").string());
  os << "variant,mean,std";
  for (const auto& t : r.trials) os << ",trial" << t.trial;
  os << "\n";
  for (const auto& v : r.variants) {
    const auto& s = r.aggregate.at(v);
    os << v << ',' << fmt6(s.mean) << ',' << fmt6(s.std);
    for (double x : s.values) os << ',' << fmt6(x);
    os << "\n";
  }
  if (!os) throw std::runtime_error("eval: write failed for " + (dir / "summary.csv").string());
}

}  // namespace mdda::eval
