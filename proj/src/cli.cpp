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

#include "mdda/cli.hpp"

#include "mdda/datagen.hpp"
#include "mdda/eval.hpp"
#include "mdda/pipeline.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mdda::cli {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"gen-data", "pretrain", "adapt",   "distill",
                                              "predict",  "run",      "ablate", "scatter"};
  return names;
}

namespace {

std::string valid_list() {
  std::string s;
  for (const auto& n : subcommands()) s += (s.empty() ? "" : ", ") + n;
  return s;
}

const char* describe(const std::string& sub) {
  if (sub == "gen-data") return "sample source and target domains into <out>/data";
  if (sub == "pretrain") return "train extractor and classifier per source";
  if (sub == "adapt") return "adversarial target encoder and distance estimate per source";
  if (sub == "distill") return "fine-tune each classifier on its target-closest half";
  if (sub == "predict") return "weighted ensemble prediction on the target test split";
  if (sub == "run") return "full pipeline over all trials, writes report.json and summary.csv";
  if (sub == "ablate") return "like run, with every ablation variant enabled";
  return "2-D scatter plots of inputs (and features when 2-D)";
}

// Layout of a staged run under the output directory.
struct Layout {
  fs::path root;
  fs::path source_csv(const std::string& name) const { return root / "data" / "sources" / (name + ".csv"); }
  fs::path adapt_csv() const { return root / "data" / "target" / "adapt.csv"; }
  fs::path test_csv() const { return root / "data" / "target" / "test.csv"; }
  fs::path bundle(const std::string& name) const { return root / "bundles" / name; }
};

struct Context {
  const Invocation& inv;
  eval::ExperimentConfig cfg;
  std::string hash;
  std::uint64_t seed;  // trial-0 seed for staged commands
  Layout layout;
  std::ostream& err;

  void log(const std::string& msg) const {
    if (inv.verbosity > 0) err << msg << "\n";
  }
};

data::Dataset load_source(const Context& c, std::size_t i) {
  const auto& name = c.cfg.sources[i].spec.name;
  const fs::path p = c.layout.source_csv(name);
  if (!fs::exists(p)) throw std::runtime_error("cli: missing " + p.string() + " (run gen-data first)");
  data::Dataset ds = data::load_csv(p);
  ds.domain_name = name;
  return ds;
}

data::Dataset load_target(const fs::path& p) {
  if (!fs::exists(p)) throw std::runtime_error("cli: missing " + p.string() + " (run gen-data first)");
  return data::load_csv(p);
}

pipeline::SourceBundle load_checked(const Context& c, const std::string& name, int min_stage) {
  const fs::path dir = c.layout.bundle(name);
  const json meta = pipeline::load_bundle_meta(dir);
  if (meta.value("config_hash", std::string()) != c.hash)
    throw std::runtime_error("cli: bundle " + dir.string() + " was produced with a different config or seed");
  pipeline::SourceBundle b = pipeline::load_bundle(dir);
  if (b.stage() < min_stage) {
    if (min_stage >= 2) throw std::runtime_error("pipeline: bundle missing target encoder (" + name + ")");
    throw std::runtime_error("cli: bundle " + dir.string() + " is not pretrained");
  }
  return b;
}

void cmd_gen_data(const Context& c) {
  const eval::TrialData d = eval::generate_trial_data(c.cfg, c.seed);
  for (std::size_t i = 0; i < d.sources.size(); ++i) data::save_csv(d.sources[i], c.layout.source_csv(c.cfg.sources[i].spec.name));
  data::save_csv(d.target_adapt, c.layout.adapt_csv());
  data::save_csv(d.target_test, c.layout.test_csv());
  c.log("gen-data: " + std::to_string(d.sources.size()) + " sources, target " + std::to_string(d.target_adapt.size()) +
        " adapt / " + std::to_string(d.target_test.size()) + " test");
}

void cmd_pretrain(const Context& c) {
  const auto f_cfg = c.cfg.extractor_config();
  const auto c_cfg = c.cfg.classifier_config();
  for (std::size_t i = 0; i < c.cfg.sources.size(); ++i) {
    const auto& name = c.cfg.sources[i].spec.name;
    c.log("pretrain: " + name);
    Rng rng = eval::stage_stream(c.seed, i, 1);
    auto b = pipeline::pretrain_source(load_source(c, i), f_cfg, c_cfg, c.cfg.pretrain, rng);
    b.name = name;
    pipeline::save_bundle(b, c.layout.bundle(name), c.hash);
  }
}

void cmd_adapt(const Context& c) {
  const auto tgt = load_target(c.layout.adapt_csv());
  for (std::size_t i = 0; i < c.cfg.sources.size(); ++i) {
    const auto& name = c.cfg.sources[i].spec.name;
    Rng rng = eval::stage_stream(c.seed, i, 2);
    auto b = pipeline::adapt_target(load_checked(c, name, 1), load_source(c, i), tgt.x, c.cfg.adapt, rng);
    c.log("adapt: " + name + " wd_estimate " + std::to_string(*b.wd_estimate));
    pipeline::save_bundle(b, c.layout.bundle(name), c.hash);
  }
}

void cmd_distill(const Context& c) {
  const auto tgt = load_target(c.layout.adapt_csv());
  for (std::size_t i = 0; i < c.cfg.sources.size(); ++i) {
    const auto& name = c.cfg.sources[i].spec.name;
    const auto b = load_checked(c, name, 2);
    if (b.distilled) throw std::runtime_error("cli: bundle " + name + " is already distilled");
    const auto src = load_source(c, i);
    const auto sel = pipeline::distill_select(pipeline::sample_distances(b, src, tgt.x), c.cfg.distill.fraction,
                                              c.cfg.distill.rule);
    Rng rng = eval::stage_stream(c.seed, i, 3);
    c.log("distill: " + name + " keeps " + std::to_string(sel.selected.size()) + " of " + std::to_string(src.size()));
    pipeline::save_bundle(pipeline::distill_finetune(b, src, sel, c.cfg.distill.train, rng), c.layout.bundle(name),
                          c.hash);
  }
}

void cmd_predict(const Context& c) {
  const auto test = load_target(c.layout.test_csv());
  std::vector<pipeline::SourceBundle> bundles;
  std::vector<double> wd;
  for (const auto& s : c.cfg.sources) {
    bundles.push_back(load_checked(c, s.spec.name, 2));
    wd.push_back(*bundles.back().wd_estimate);
  }
  const auto weights = pipeline::domain_weight(wd);
  const auto pred = pipeline::aggregate_predict(bundles, weights, test.x);
  const double acc = eval::accuracy(pred.labels, test.y);

  std::ofstream os(c.layout.root / "predictions.csv");
  if (!os) throw std::runtime_error("cli: cannot write " + (c.layout.root / "predictions.csv").string());
  os << "label";
  for (Eigen::Index k = 0; k < pred.probs.cols(); ++k) os << ",p" << k;
  os << "\n";
  char buf[32];
  for (Eigen::Index i = 0; i < pred.probs.rows(); ++i) {
    os << pred.labels[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < pred.probs.cols(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", pred.probs(i, k));
      os << ',' << buf;
    }
    os << "\n";
  }
  json summary = {{"accuracy", acc}, {"config_hash", c.hash}, {"sources", json::array()}};
  for (std::size_t i = 0; i < bundles.size(); ++i)
    summary["sources"].push_back({{"name", bundles[i].name},
                                  {"stage", bundles[i].stage()},
                                  {"wd_estimate", wd[i]},
                                  {"raw_weight", weights.raw[i]},
                                  {"normalized_weight", weights.normalized[i]}});
  std::ofstream js(c.layout.root / "predict.json");
  js << summary.dump(2) << "\n";
  if (!os || !js) throw std::runtime_error("cli: failed writing prediction outputs");
  c.log("predict: accuracy " + std::to_string(acc));
}

void cmd_run(const Context& c, bool all_ablations) {
  eval::ExperimentConfig cfg = c.cfg;
  if (all_ablations) cfg.ablations = {true, true, true, true};
  const auto report = eval::run_experiment(cfg, [&](const std::string& m) { c.log(m); });
  eval::export_report(report, c.layout.root);
  for (const auto& v : report.variants) {
    const auto& s = report.aggregate.at(v);
    c.log(v + ": " + std::to_string(s.mean) + " +- " + std::to_string(s.std));
  }
}

void cmd_scatter(const Context& c) {
  if (c.cfg.target.spec.d != 2)
    throw std::runtime_error("eval: scatter needs 2-D inputs, config has d = " + std::to_string(c.cfg.target.spec.d));
  const eval::TrialData d = eval::generate_trial_data(c.cfg, c.seed);
  std::vector<eval::ScatterSeries> inputs;
  for (const auto& s : d.sources) inputs.push_back({s.domain_name, s.x, s.y});
  inputs.push_back({d.target_test.domain_name, d.target_test.x, d.target_test.y});
  eval::export_scatter(inputs, c.layout.root / "scatter_inputs.svg");

  // Feature plots need adapted bundles with a 2-wide extractor.
  for (std::size_t i = 0; i < c.cfg.sources.size(); ++i) {
    const auto& name = c.cfg.sources[i].spec.name;
    if (!fs::exists(c.layout.bundle(name) / "meta.json")) continue;
    const auto b = load_checked(c, name, 2);
    if (b.extractor.config().output_width() != 2) continue;
    std::vector<eval::ScatterSeries> feats{
        {name + " F", nn::forward(b.extractor, d.sources[i].x), d.sources[i].y},
        {d.target_test.domain_name + " F_T", nn::forward(*b.target_encoder, d.target_test.x), d.target_test.y}};
    eval::export_scatter(feats, c.layout.root / ("scatter_features_" + name + ".svg"));
  }
}

}  // namespace

Invocation parse_args(std::span<const std::string> args, std::optional<std::string> env_out) {
  CLI::App app{"Multi-source distilling domain adaptation on synthetic domains", "mdda"};
  app.require_subcommand(0, 1);

  Invocation inv;
  std::string out;
  std::uint64_t seed = 0;
  bool quiet = false;
  std::vector<std::pair<CLI::Option*, CLI::Option*>> flags;  // (--out, --seed) per subcommand
  for (const auto& name : subcommands()) {
    auto* sub = app.add_subcommand(name, describe(name));
    sub->add_option("--config", inv.config_path, "experiment config (JSON)");
    auto* o = sub->add_option("--out", out, "output directory (default ./out, or $MDDA_OUT)");
    auto* s = sub->add_option("--seed", seed, "master seed override");
    sub->add_flag("-q,--quiet", quiet, "suppress progress messages");
    flags.emplace_back(o, s);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::ostringstream o, er;
    app.exit(e, o, er);
    inv.help = o.str();
    return inv;
  } catch (const CLI::CallForAllHelp& e) {
    std::ostringstream o, er;
    app.exit(e, o, er);
    inv.help = o.str();
    return inv;
  } catch (const CLI::ParseError& e) {
    throw UsageError(std::string(e.what()) + "\nvalid subcommands: " + valid_list() + "\nrun with --help for usage");
  }

  const auto chosen = app.get_subcommands();
  if (chosen.empty()) throw UsageError("no subcommand given\nvalid subcommands: " + valid_list());
  inv.subcommand = chosen.front()->get_name();
  const auto idx = static_cast<std::size_t>(
      std::find(subcommands().begin(), subcommands().end(), inv.subcommand) - subcommands().begin());
  const auto [out_opt, seed_opt] = flags.at(idx);
  if (*out_opt)
    inv.output_dir = out;
  else if (env_out && !env_out->empty())
    inv.output_dir = *env_out;
  if (*seed_opt) inv.seed = seed;
  inv.verbosity = quiet ? 0 : 1;
  if (inv.config_path.empty()) throw UsageError(inv.subcommand + ": --config PATH is required");
  if (!fs::is_regular_file(inv.config_path))
    throw UsageError(inv.subcommand + ": config file not found: " + inv.config_path.string());
  return inv;
}

int dispatch(const Invocation& inv, std::ostream& out, std::ostream& err) {
  if (inv.help) {
    out << *inv.help;
    return kExitOk;
  }
  try {
    eval::ExperimentConfig cfg = eval::load_experiment_config(inv.config_path);
    if (inv.seed) cfg.master_seed = *inv.seed;
    Context c{inv, cfg, eval::config_hash(cfg), eval::trial_seed(cfg.master_seed, 0), Layout{inv.output_dir}, err};
    fs::create_directories(inv.output_dir);
    const std::string& s = inv.subcommand;
    if (s == "gen-data") cmd_gen_data(c);
    else if (s == "pretrain") cmd_pretrain(c);
    else if (s == "adapt") cmd_adapt(c);
    else if (s == "distill") cmd_distill(c);
    else if (s == "predict") cmd_predict(c);
    else if (s == "run") cmd_run(c, false);
    else if (s == "ablate") cmd_run(c, true);
    else if (s == "scatter") cmd_scatter(c);
    else throw UsageError("unknown subcommand '" + s + "'\nvalid subcommands: " + valid_list());
  } catch (const UsageError& e) {
    err << "mdda: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "mdda " << inv.subcommand << ": " << e.what() << "\n";
    return kExitRuntime;
  }
  out << "OK " << inv.subcommand << " " << inv.output_dir.string() << "\n";
  return kExitOk;
}

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err, std::optional<std::string> env_out) {
  Invocation inv;
  try {
    inv = parse_args(args, std::move(env_out));
  } catch (const UsageError& e) {
    err << "mdda: " << e.what() << "\n";
    return kExitUsage;
  }
  return dispatch(inv, out, err);
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args(argv + (argc > 0 ? 1 : 0), argv + argc);
  std::optional<std::string> env_out;
  if (const char* e = std::getenv("MDDA_OUT")) env_out = e;
  return run(args, out, err, env_out);
}

}  // namespace mdda::cli
