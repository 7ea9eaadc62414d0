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

// Acceptance gate. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Tolerances are fixed here on purpose.

#include "mdda/cli.hpp"
#include "mdda/eval.hpp"
#include "mdda/pipeline.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace mdda;
using ad::Tensor;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

// Pinned tolerances and budgets.
constexpr double kGradTol = 1e-6;
constexpr double kPenaltyGradTol = 1e-4;
constexpr double kPenaltyValueTol = 1e-10;
constexpr double kMatchedWdTol = 0.05;
constexpr double kWeightTol = 1e-10;
constexpr int kSeeds = 10;
constexpr int kMonotoneMin = 9;
constexpr int kWeightingWinsMin = 7;
constexpr int kDistillWinsMin = 8;
constexpr double kBudgetC1 = 60, kBudgetC3 = 600, kBudgetC4 = 900, kBudgetC5 = 600;

int failures = 0;

void report(int id, bool ok, const std::string& title, const std::string& detail) {
  std::printf("%s  criterion %d: %s | %s\n", ok ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += !ok;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double rel_error(const Tensor& a, const Tensor& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

Tensor numeric_grad(const std::function<double()>& f, Tensor& x, double h = 1e-5) {
  Tensor g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + h;
    const double fp = f();
    x.data()[i] = keep - h;
    const double fm = f();
    x.data()[i] = keep;
    g.data()[i] = (fp - fm) / (2 * h);
  }
  return g;
}

Tensor uniform(Rng& r, Eigen::Index rows, Eigen::Index cols, double lo = -2.0, double hi = 2.0) {
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = r.uniform(lo, hi);
  return t;
}

// Smallest |pre-activation| at any hidden unit: finite differences are only
// valid away from the relu kinks.
double min_kink_distance(const nn::Mlp& net, const Tensor& x) {
  if (net.config().activation == nn::Activation::Tanh) return std::numeric_limits<double>::infinity();
  const double slope = net.config().activation == nn::Activation::LeakyRelu ? net.config().slope : 0.0;
  Tensor h = x;
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l + 1 < net.config().layer_count(); ++l) {
    Tensor z = h * net.weight(l).transpose();
    z.rowwise() += net.bias(l).row(0);
    m = std::min(m, z.cwiseAbs().minCoeff());
    h = z.unaryExpr([slope](double v) { return v > 0 ? v : slope * v; });
  }
  return m;
}

// ---------------------------------------------------------------- 1 and 2

void criterion_gradients() {
  const auto t0 = Clock::now();
  Rng rng(20261014);
  const std::vector<nn::Activation> acts{nn::Activation::Relu, nn::Activation::LeakyRelu, nn::Activation::Tanh};
  double worst = 0.0, worst_gp = 0.0;
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int in = 1 + static_cast<int>(rng.uniform_index(4));
    const int depth = 1 + static_cast<int>(rng.uniform_index(2));
    std::vector<int> widths{in};
    for (int l = 0; l < depth; ++l) widths.push_back(2 + static_cast<int>(rng.uniform_index(5)));
    const int out = 1 + static_cast<int>(rng.uniform_index(3));
    widths.push_back(out);
    const nn::MlpConfig cfg{widths, acts[rng.uniform_index(3)], 0.2,
                            rng.uniform_index(2) ? nn::FinalActivation::Tanh : nn::FinalActivation::None};
    nn::Mlp net = nn::init_mlp(cfg, rng);
    const int batch = 2 + static_cast<int>(rng.uniform_index(5));
    Tensor x = uniform(rng, batch, in);
    while (min_kink_distance(net, x) < 1e-3) x = uniform(rng, batch, in);
    std::vector<int> labels(static_cast<std::size_t>(batch));
    for (auto& y : labels) y = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(out)));
    const Tensor target = uniform(rng, batch, out);
    const int kind = trial % 4;

    auto loss = [&](ad::Tape& t, const nn::BoundMlp& b, ad::Var vx) -> ad::Var {
      ad::Var y = b.forward(vx);
      switch (kind) {
        case 0: return ad::softmax_cross_entropy(y, labels);
        case 1: return ad::mean(ad::square(y - t.leaf(target)));
        case 2: return ad::mean(ad::tanh(y)) * ad::sum(ad::exp(y * 0.3));
        default: return ad::log(ad::mean(ad::square(y)) + 1.0) + ad::sqrt(ad::sum(ad::square(y)) + 0.5);
      }
    };
    auto value = [&] {
      ad::Tape t;
      nn::BoundMlp b(net, t);
      return loss(t, b, t.leaf(x)).item();
    };
    ad::Tape tape;
    nn::BoundMlp bound(net, tape);
    ad::Var vx = tape.leaf(x);
    std::vector<ad::Var> wrt(bound.params().begin(), bound.params().end());
    wrt.push_back(vx);
    const auto g = ad::backward(tape, loss(tape, bound, vx), wrt);
    for (std::size_t p = 0; p < net.params().size(); ++p) {
      Tensor& param = net.mutable_params()[p];
      worst = std::max(worst, rel_error(g[bound.params()[p]], numeric_grad(value, param)));
      ++checked;
    }
    worst = std::max(worst, rel_error(g[vx], numeric_grad(value, x)));

    // Gradient penalty of a critic on these inputs, differentiated w.r.t. its parameters.
    nn::Mlp critic = nn::init_mlp(nn::MlpConfig{{in, 2 + static_cast<int>(rng.uniform_index(6)), 1},
                                                nn::Activation::LeakyRelu, 0.2},
                                  rng);
    Tensor s = uniform(rng, batch, in), tt = uniform(rng, batch, in);
    const std::uint64_t pseed = rng.next();
    auto points = [&] {
      Rng pr(pseed);
      return pipeline::penalty_points(s, tt, pr, true);
    };
    while (min_kink_distance(critic, points()) < 1e-3) {
      s = uniform(rng, batch, in);
      tt = uniform(rng, batch, in);
    }
    ad::Tape gt;
    nn::BoundMlp bc(critic, gt);
    Rng pr(pseed);
    const auto gg = nn::gradients_for(ad::backward(gt, pipeline::gradient_penalty(bc, s, tt, pr, true), bc.params()), bc);
    for (std::size_t p = 0; p < critic.params().size(); ++p) {
      Tensor& param = critic.mutable_params()[p];
      const Tensor num = numeric_grad(
          [&] {
            Rng q(pseed);
            return pipeline::gradient_penalty(critic, s, tt, q, true);
          },
          param);
      worst_gp = std::max(worst_gp, rel_error(gg[p], num));
    }
  }
  const double secs = seconds_since(t0);
  report(1, worst < kGradTol && worst_gp < kPenaltyGradTol && secs < kBudgetC1, "gradient correctness",
         fmt("50 MLPs, %d param tensors, max rel err %.2e (tol %.0e); penalty double-backprop %.2e (tol %.0e); %.1fs",
             checked, worst, kGradTol, worst_gp, kPenaltyGradTol, secs));
}

void criterion_penalty_values() {
  Rng rng(2);
  double unit_worst = 0.0, three_worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + static_cast<int>(rng.uniform_index(8));
    Tensor w = uniform(rng, 1, d);
    w /= w.norm();
    const Tensor s = uniform(rng, 16, d, -5, 5), t = uniform(rng, 16, d, -5, 5);
    auto critic = [&](double norm) { return nn::Mlp(nn::MlpConfig{{d, 1}}, {norm * w, Tensor::Constant(1, 1, 0.3)}); };
    Rng a(trial), b(trial);
    unit_worst = std::max(unit_worst, pipeline::gradient_penalty(critic(1.0), s, t, a, true));
    three_worst = std::max(three_worst, std::abs(pipeline::gradient_penalty(critic(3.0), s, t, b, trial % 2) - 4.0));
  }
  report(2, unit_worst < kPenaltyValueTol && three_worst < kPenaltyValueTol, "gradient-penalty analytic cases",
         fmt("unit-norm max penalty %.2e (< %.0e); norm-3 max |penalty - 4| %.2e (< %.0e)", unit_worst,
             kPenaltyValueTol, three_worst, kPenaltyValueTol));
}

// ---------------------------------------------------------------- domains

data::DomainSpec blobs(const std::string& name, double rotation = 0.0) {
  data::DomainSpec s;
  s.name = name;
  s.n_classes = 3;
  s.d = 2;
  for (int k = 0; k < 3; ++k) {
    const double a = 2 * std::numbers::pi * k / 3;
    Eigen::VectorXd m(2);
    m << 3 + 1.2 * std::cos(a), 1.2 * std::sin(a);
    s.means.push_back(m);
  }
  s.cov_scale = 0.35;
  s.rotation = rotation;
  return s;
}

const nn::MlpConfig kF{{2, 32, 16}};
const nn::MlpConfig kC{{16, 3}};

pipeline::TrainConfig pretrain_schedule() {
  pipeline::TrainConfig tc;
  tc.steps = 1000;
  return tc;
}

// ---------------------------------------------------------------- 3

void criterion_monotonicity() {
  const auto t0 = Clock::now();
  const std::vector<double> rotations{0.1, 0.4, 0.7, 1.1, 1.5};
  std::vector<data::ShiftDelta> deltas;
  for (double r : rotations) deltas.push_back({r, {}, 1.0});
  const auto family = data::make_shift_family(blobs("src"), deltas);
  const std::size_t n = 1000;
  int monotone = 0;
  double matched_worst = 0.0, resample_worst = 0.0;
  std::string trace;
  for (int t = 0; t < kSeeds; ++t) {
    const std::uint64_t seed = eval::trial_seed(3, t);
    Rng data_rng = Rng(seed).fork(stream::kData);
    const auto src = data::sample_domain(blobs("src"), n, data_rng);
    const auto resample = data::sample_domain(blobs("src"), n, data_rng);
    Rng pre_rng = eval::stage_stream(seed, 0, 1);
    const auto bundle = pipeline::pretrain_source(src, kF, kC, pretrain_schedule(), pre_rng);
    auto adapt = [&](const Tensor& tgt, int stream_id) {
      Rng r = eval::stage_stream(seed, static_cast<std::size_t>(stream_id), 2);
      return *pipeline::adapt_target(bundle, src, tgt, pipeline::AdaptConfig{}, r).wd_estimate;
    };
    matched_worst = std::max(matched_worst, std::abs(adapt(src.x, 0)));
    resample_worst = std::max(resample_worst, std::abs(adapt(resample.x, 1)));
    std::vector<double> wd;
    for (std::size_t k = 0; k < family.size(); ++k) wd.push_back(adapt(data::sample_domain(family[k], n, data_rng).x, 2 + static_cast<int>(k)));
    bool inc = true;
    for (std::size_t k = 1; k < wd.size(); ++k) inc &= wd[k] > wd[k - 1];
    monotone += inc;
    if (t == 0) trace = fmt("seed0 wd %.2f %.2f %.2f %.2f %.2f", wd[0], wd[1], wd[2], wd[3], wd[4]);
  }
  const double secs = seconds_since(t0);
  report(3, monotone >= kMonotoneMin && matched_worst <= kMatchedWdTol && secs < kBudgetC3,
         "Wasserstein-estimate monotonicity",
         fmt("strictly increasing in %d/%d seeds (need %d); matched max |wd| %.4f (<= %.2f); "
             "independent same-distribution resample max |wd| %.3f (informational); %s; %.0fs",
             monotone, kSeeds, kMonotoneMin, matched_worst, kMatchedWdTol, resample_worst, trace.c_str(), secs));
}

// ---------------------------------------------------------------- 4

eval::ExperimentConfig weighting_config() {
  eval::ExperimentConfig cfg;
  cfg.master_seed = 2026;
  cfg.repeat = kSeeds;
  cfg.sources = {{blobs("near_a", 0.25), 1000}, {blobs("near_b", -0.25), 1000}, {blobs("far", 2.0), 1000}};
  cfg.target = {blobs("target"), 1000};
  cfg.pretrain = pretrain_schedule();
  cfg.ablations.uniform = true;
  return cfg;
}

void criterion_weighting(eval::TrialArtifacts& first) {
  const auto t0 = Clock::now();
  const auto cfg = weighting_config();
  int wins = 0;
  bool shared = true;
  double sum_w = 0.0, sum_u = 0.0;
  for (int t = 0; t < kSeeds; ++t) {
    eval::TrialArtifacts art;
    const auto tr = eval::run_trial(cfg, t, &art);
    // Both variants are computed from the same adapted and distilled bundles.
    const auto& x = art.data.target_test.x;
    shared &= art.predictions.at("mdda").probs == pipeline::aggregate_predict(art.distilled, art.weights, x).probs;
    shared &= art.predictions.at("uniform").probs == pipeline::baseline_uniform(art.distilled, x).probs;
    for (std::size_t i = 0; i < art.distilled.size(); ++i) {
      shared &= pipeline::checksum(art.distilled[i].extractor) == pipeline::checksum(art.adapted[i].extractor);
      shared &= pipeline::checksum(*art.distilled[i].target_encoder) == pipeline::checksum(*art.adapted[i].target_encoder);
    }
    const double w = tr.accuracy.at("mdda"), u = tr.accuracy.at("uniform");
    wins += w >= u;
    sum_w += w;
    sum_u += u;
    if (t == 0) first = std::move(art);
  }
  const double secs = seconds_since(t0);
  const double mw = sum_w / kSeeds, mu = sum_u / kSeeds;
  report(4, mw >= mu && wins >= kWeightingWinsMin && shared && secs < kBudgetC4, "weighting direction",
         fmt("mean acc weighted %.4f vs uniform %.4f; paired wins (>=) %d/%d (need %d); shared artifacts %s; %.0fs", mw,
             mu, wins, kSeeds, kWeightingWinsMin, shared ? "yes" : "NO", secs));
}

// ---------------------------------------------------------------- 5

void criterion_distilling() {
  const auto t0 = Clock::now();
  const auto near = blobs("near", 0.25);
  auto far = blobs("far");
  far.translation = Eigen::Vector2d(2.0, 0.0);
  const auto target = blobs("target");
  int wins = 0;
  double before_sum = 0.0, after_sum = 0.0, near_share = 0.0;
  for (int t = 0; t < kSeeds; ++t) {
    const std::uint64_t seed = eval::trial_seed(5, t);
    Rng data_rng = Rng(seed).fork(stream::kData);
    const auto clean = data::sample_domain(near, 500, data_rng);
    auto corrupt = data::sample_domain(far, 500, data_rng);
    for (auto& y : corrupt.y) y = (y + 1) % 3;  // far half carries permuted labels
    const std::vector<data::Dataset> parts{clean, corrupt};
    const auto src = data::concat(parts, "mixed");
    const auto tgt = data::sample_domain(target, 1000, data_rng);
    const auto adapt_half = tgt.slice(0, 500), test = tgt.slice(500, 1000);

    Rng r1 = eval::stage_stream(seed, 0, 1), r2 = eval::stage_stream(seed, 0, 2), r3 = eval::stage_stream(seed, 0, 3);
    const auto pre = pipeline::pretrain_source(src, kF, kC, pretrain_schedule(), r1);
    const auto adapted = pipeline::adapt_target(pre, src, adapt_half.x, pipeline::AdaptConfig{}, r2);
    const auto sel = pipeline::distill_select(pipeline::sample_distances(adapted, src, adapt_half.x));
    const auto distilled = pipeline::distill_finetune(adapted, src, sel, pipeline::DistillConfig{}.train, r3);
    const double before = eval::accuracy(pipeline::predict_source(adapted, test.x).labels, test.y);
    const double after = eval::accuracy(pipeline::predict_source(distilled, test.x).labels, test.y);
    wins += after >= before;
    before_sum += before;
    after_sum += after;
    std::size_t in_clean = 0;
    for (auto i : sel.selected) in_clean += i < clean.size();
    near_share += static_cast<double>(in_clean) / static_cast<double>(sel.selected.size());
  }
  const double secs = seconds_since(t0);
  report(5, wins >= kDistillWinsMin && secs < kBudgetC5, "distilling direction",
         fmt("distilled >= undistilled in %d/%d seeds (need %d); mean acc %.4f -> %.4f; selected from clean half %.0f%%; "
             "%.0fs",
             wins, kSeeds, kDistillWinsMin, before_sum / kSeeds, after_sum / kSeeds, 100 * near_share / kSeeds, secs));
}

// ---------------------------------------------------------------- 6

void criterion_degenerate(const eval::TrialArtifacts& art) {
  const auto& x = art.data.target_test.x;
  bool exact = true;
  for (const auto& b : art.distilled) {
    const std::vector<pipeline::SourceBundle> one{b};
    const std::vector<double> wd{*b.wd_estimate};
    const auto agg = pipeline::aggregate_predict(one, pipeline::domain_weight(wd), x);
    const auto solo = pipeline::predict_source(b, x);
    exact &= agg.probs == solo.probs && agg.labels == solo.labels;
  }
  // Flatten the weights a little so rescaling has something to act on.
  pipeline::DomainWeights base;
  base.raw = {0.5, 0.3, 0.2};
  base.normalized = base.raw;
  const auto ref = pipeline::aggregate_predict(art.distilled, base, x).labels;
  const auto eq9 = pipeline::aggregate_predict(art.distilled, art.weights, x).labels;
  bool invariant = true;
  for (double c : {1e-6, 0.37, 3.0, 1e6}) {
    pipeline::DomainWeights scaled;
    for (double r : base.raw) scaled.raw.push_back(c * r);
    scaled.normalized = scaled.raw;  // unnormalized positive weights
    invariant &= pipeline::aggregate_predict(art.distilled, scaled, x).labels == ref;
    pipeline::DomainWeights eq9_scaled;
    for (double r : art.weights.raw) eq9_scaled.raw.push_back(c * r);
    eq9_scaled.normalized = eq9_scaled.raw;
    invariant &= pipeline::aggregate_predict(art.distilled, eq9_scaled, x).labels == eq9;
  }
  report(6, exact && invariant, "degenerate-ensemble exactness",
         fmt("M=1 bitwise equal to solo for %zu sources: %s; labels invariant to 4 positive rescalings: %s",
             art.distilled.size(), exact ? "yes" : "NO", invariant ? "yes" : "NO"));
}

// ---------------------------------------------------------------- 7 and 9

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch() {
  const fs::path p = fs::temp_directory_path() / ("mdda_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(p);
  return p;
}

fs::path small_config(const fs::path& dir) {
  eval::ExperimentConfig cfg;
  cfg.master_seed = 1;
  cfg.repeat = 2;
  cfg.sources = {{blobs("near", 0.2), 300}, {blobs("far", 1.2), 300}};
  cfg.target = {blobs("target"), 300};
  cfg.pretrain.steps = 300;
  cfg.adapt.steps = 40;
  cfg.distill.train.steps = 60;
  cfg.ablations = {true, true, false, true};
  const fs::path p = dir / "exp.json";
  std::ofstream(p) << eval::to_json(cfg).dump(2);
  return p;
}

void criterion_determinism(const fs::path& dir, const fs::path& cfg) {
  const std::string bin = MDDA_CLI_PATH;
  const int a = shell(bin + " run -q --seed 77 --config " + cfg.string() + " --out " + (dir / "run1").string() + " >/dev/null");
  const int b = shell(bin + " run -q --seed 77 --config " + cfg.string() + " --out " + (dir / "run2").string() + " >/dev/null");
  const std::string r1 = slurp(dir / "run1" / "report.json"), r2 = slurp(dir / "run2" / "report.json");
  report(7, a == 0 && b == 0 && !r1.empty() && r1 == r2, "determinism",
         fmt("two `run` executions, seed 77: exit %d/%d, report.json %zu bytes, byte-identical: %s", a, b, r1.size(),
             r1 == r2 && !r1.empty() ? "yes" : "NO"));
}

void criterion_weights() {
  const std::vector<double> l{0, 1, 2};
  const auto w = pipeline::domain_weight(l);
  const double e0 = std::abs(w.raw[0] - 1.0), e1 = std::abs(w.raw[1] - 0.6065306597126334),
               e2 = std::abs(w.raw[2] - 0.1353352832366127);
  const double worst = std::max({e0, e1, e2});
  report(8, worst < kWeightTol, "distance-to-weight kernel",
         fmt("raw [%.10f, %.10f, %.10f], max error %.2e (< %.0e)", w.raw[0], w.raw[1], w.raw[2], worst, kWeightTol));
}

void criterion_formats(const fs::path& dir, const fs::path& cfg_path) {
  std::vector<std::string> problems;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  };

  // CSV dataset round trip and its error paths
  Rng r(9);
  const auto ds = data::sample_domain(blobs("csv"), 50, r);
  data::save_csv(ds, dir / "ds.csv");
  const auto back = data::load_csv(dir / "ds.csv");
  check(back.y == ds.y && back.x == ds.x, "csv round trip");
  std::ofstream(dir / "bad.csv") << "y,x0\na,b\n";
  try {
    data::load_csv(dir / "bad.csv");
    check(false, "csv malformed row accepted");
  } catch (const std::exception& e) {
    check(std::string(e.what()).find("line 2") != std::string::npos, "csv error names line 2");
  }
  std::ofstream(dir / "empty.csv") << "y,x0\n";
  try {
    data::load_csv(dir / "empty.csv");
    check(false, "csv empty accepted");
  } catch (const std::exception& e) {
    check(std::string(e.what()).find("dataset has zero rows") != std::string::npos, "csv zero-rows message");
  }

  // report JSON and summary CSV
  const auto cfg = eval::load_experiment_config(cfg_path);
  const auto rep = eval::run_experiment(cfg);
  eval::export_report(rep, dir / "rep");
  check(eval::report_from_json(nlohmann::json::parse(slurp(dir / "rep" / "report.json"))) == rep, "report.json round trip");
  std::ifstream csv(dir / "rep" / "summary.csv");
  std::vector<std::string> lines;
  for (std::string l; std::getline(csv, l);) lines.push_back(l);
  check(lines.size() == rep.variants.size() + 1, "summary.csv row count");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::stringstream ss(lines[i]);
    std::string name, cell;
    std::getline(ss, name, ',');
    const auto& agg = rep.aggregate.at(name);
    std::vector<double> want{agg.mean, agg.std};
    want.insert(want.end(), agg.values.begin(), agg.values.end());
    for (double v : want) {
      std::getline(ss, cell, ',');
      check(std::abs(std::stod(cell) - v) <= 1e-5 * std::abs(v), "summary.csv 6-digit value " + cell);
    }
  }

  // SVG structural re-parse, including the empty plot
  namespace bpt = boost::property_tree;
  std::vector<eval::ScatterSeries> series{{"src", ds.x, ds.y}, {"tgt", ds.x * 0.5, ds.y}};
  eval::export_scatter(series, dir / "s.svg");
  for (const auto& svg : {slurp(dir / "s.svg"), eval::render_scatter({})}) {
    try {
      std::istringstream is(svg);
      bpt::ptree tree;
      bpt::read_xml(is, tree);
      check(tree.get_child_optional("svg").has_value(), "svg root");
    } catch (const std::exception& e) {
      check(false, std::string("svg parse: ") + e.what());
    }
  }

  // CLI exit-code contract
  const std::string bin = MDDA_CLI_PATH;
  const std::string sink = " >/dev/null 2>&1";
  const std::string out = " --out " + (dir / "cli").string();
  check(shell(bin + " bogus" + sink) == 2, "unknown subcommand exits 2");
  check(shell(bin + " run --nope --config " + cfg_path.string() + sink) == 2, "unknown flag exits 2");
  check(shell(bin + " run --config " + (dir / "missing.json").string() + sink) == 2, "missing config exits 2");
  check(shell(bin + " adapt --help" + sink) == 0, "--help exits 0");
  check(shell(bin + " gen-data -q --config " + cfg_path.string() + out + sink) == 0, "gen-data exits 0");
  check(shell(bin + " pretrain -q --config " + cfg_path.string() + out + sink) == 0, "pretrain exits 0");
  const std::string err_file = (dir / "predict.err").string();
  check(shell(bin + " predict -q --config " + cfg_path.string() + out + " >/dev/null 2>" + err_file) == 1,
        "predict before adapt exits 1");
  check(slurp(err_file).find("bundle missing target encoder") != std::string::npos, "predict error message");
  const std::string ok_file = (dir / "ok.out").string();
  check(shell(bin + " adapt -q --config " + cfg_path.string() + out + " >" + ok_file) == 0, "adapt exits 0");
  check(slurp(ok_file) == "OK adapt " + (dir / "cli").string() + "\n", "OK line");

  std::string detail = "csv/json/svg round trips and CLI exit codes 0/1/2";
  if (!problems.empty()) {
    detail = "failed:";
    for (const auto& p : problems) detail += " [" + p + "]";
  }
  report(9, problems.empty(), "formats and CLI contract", detail);
}

}  // namespace

int main() {
  const fs::path dir = scratch();
  const fs::path cfg = small_config(dir);
  criterion_gradients();
  criterion_penalty_values();
  criterion_monotonicity();
  eval::TrialArtifacts first;
  criterion_weighting(first);
  criterion_distilling();
  criterion_degenerate(first);
  criterion_determinism(dir, cfg);
  criterion_weights();
  criterion_formats(dir, cfg);
  std::error_code ec;
  fs::remove_all(dir, ec);
  std::printf("%s: %d of 9 criteria failed\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
