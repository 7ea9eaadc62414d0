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

#include "mdda/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mdda::pipeline {

namespace {

struct StepError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_nonempty(const Tensor& t, const char* what) {
  if (t.rows() < 1) throw std::invalid_argument(std::string("pipeline: ") + what + " is empty");
}

// Cross-entropy descent on classifier(features) or classifier(extractor(x)).
void train_cross_entropy(Mlp* extractor, Mlp& classifier, const Tensor& x, std::span<const int> y,
                         std::span<const std::size_t> pool, const TrainConfig& train, Rng& rng, const char* stage) {
  std::vector<Tensor> params;
  auto opt = nn::Optimizer::adam(train.lr, train.beta1, train.beta2);
  std::vector<int> labels(static_cast<std::size_t>(train.batch_size));
  for (int step = 0; step < train.steps; ++step) {
    auto picks = sample_batch(pool.size(), train.batch_size, rng);
    for (auto& p : picks) p = pool[p];
    for (std::size_t i = 0; i < picks.size(); ++i) labels[i] = y[picks[i]];

    ad::Tape tape;
    std::optional<nn::BoundMlp> f;
    nn::BoundMlp c(classifier, tape);
    ad::Var h = tape.leaf(gather_rows(x, picks));
    if (extractor) {
      f.emplace(*extractor, tape);
      h = f->forward(h);
    }
    try {
      ad::Var loss = ad::softmax_cross_entropy(c.forward(h), labels);
      std::vector<ad::Var> wrt;
      if (f) wrt.assign(f->params().begin(), f->params().end());
      wrt.insert(wrt.end(), c.params().begin(), c.params().end());
      ad::Grads grads = ad::backward(tape, loss, wrt);

      if (f) {
        auto g = nn::gradients_for(grads, *f);
        auto cg = nn::gradients_for(grads, c);
        g.insert(g.end(), cg.begin(), cg.end());
        params.assign(extractor->params().begin(), extractor->params().end());
        params.insert(params.end(), classifier.params().begin(), classifier.params().end());
        opt.step(params, g);
        const std::size_t nf = extractor->params().size();
        std::move(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(nf),
                  extractor->mutable_params().begin());
        std::move(params.begin() + static_cast<std::ptrdiff_t>(nf), params.end(), classifier.mutable_params().begin());
      } else {
        opt.step(classifier.mutable_params(), nn::gradients_for(grads, c));
      }
      for (const auto& p : classifier.params())
        if (!p.allFinite()) throw ad::NumericError("non-finite parameter");
    } catch (const ad::NumericError& e) {
      throw StepError(std::string("pipeline: ") + stage + " diverged at step " + std::to_string(step) + ": " +
                      e.what());
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (steps < 0) throw std::invalid_argument("pipeline: steps must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("pipeline: batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("pipeline: lr must be positive");
}

void AdaptConfig::validate() const {
  if (!(alpha > 0.0)) throw std::invalid_argument("pipeline: alpha must be positive");
  if (n_critic < 1) throw std::invalid_argument("pipeline: n_critic must be >= 1");
  if (steps < 0) throw std::invalid_argument("pipeline: adapt steps must be >= 0");
  if (final_critic_steps < 0) throw std::invalid_argument("pipeline: final_critic_steps must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("pipeline: batch_size must be >= 1");
  if (!(lr_critic > 0.0) || !(lr_encoder > 0.0)) throw std::invalid_argument("pipeline: learning rates must be positive");
}

MlpConfig AdaptConfig::critic_config(int feature_width) const {
  MlpConfig c;
  c.widths.push_back(feature_width);
  c.widths.insert(c.widths.end(), critic_hidden.begin(), critic_hidden.end());
  c.widths.push_back(1);
  c.activation = nn::Activation::LeakyRelu;
  c.slope = critic_slope;
  c.final_activation = nn::FinalActivation::None;
  return c;
}

const char* to_string(DistillRule r) { return r == DistillRule::Closest ? "closest" : "farthest"; }

DistillRule distill_rule_from_string(const std::string& s) {
  if (s == "closest") return DistillRule::Closest;
  if (s == "farthest") return DistillRule::Farthest;
  throw std::invalid_argument("pipeline: unknown distill rule '" + s + "'");
}

void SourceBundle::check() const {
  if (classifier.config().input_width() != extractor.config().output_width())
    throw std::invalid_argument("pipeline: classifier input width must equal extractor output width");
  const bool a = target_encoder.has_value(), b = critic.has_value(), c = wd_estimate.has_value();
  if (a != b || b != c) throw std::invalid_argument("pipeline: target encoder, critic and wd estimate must be set together");
  if (distilled && !a) throw std::invalid_argument("pipeline: a distilled bundle must be adapted first");
}

std::vector<std::size_t> DistillSelection::unselected() const {
  std::vector<char> in(distances.size(), 0);
  for (auto i : selected) in[i] = 1;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < distances.size(); ++i)
    if (!in[i]) out.push_back(i);
  return out;
}

std::vector<std::size_t> sample_batch(std::size_t n, int batch_size, Rng& rng) {
  if (n == 0) throw std::invalid_argument("pipeline: cannot sample a batch from an empty set");
  std::vector<std::size_t> out(static_cast<std::size_t>(batch_size));
  for (auto& i : out) i = static_cast<std::size_t>(rng.uniform_index(n));
  return out;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  Tensor out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

SourceBundle pretrain_source(const Dataset& src, const MlpConfig& extractor_cfg, const MlpConfig& classifier_cfg,
                             const TrainConfig& train, Rng& rng) {
  if (src.size() == 0) throw std::invalid_argument("pipeline: pretraining needs a non-empty dataset");
  train.validate();
  if (extractor_cfg.input_width() != src.dim())
    throw std::invalid_argument("pipeline: extractor input width does not match data dimension");
  if (classifier_cfg.input_width() != extractor_cfg.output_width())
    throw std::invalid_argument("pipeline: classifier input width must equal extractor output width");

  Rng init = rng.fork(stream::kInit);
  Rng batch = rng.fork(stream::kBatch);
  SourceBundle b;
  b.name = src.domain_name;
  b.extractor = nn::init_mlp(extractor_cfg, init);
  b.classifier = nn::init_mlp(classifier_cfg, init);

  std::vector<std::size_t> pool(src.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  train_cross_entropy(&b.extractor, b.classifier, src.x, src.y, pool, train, batch, "pretraining");
  return b;
}

ad::Var critic_loss(const nn::BoundMlp& critic, ad::Var src_feats, ad::Var tgt_feats) {
  require_nonempty(src_feats.value(), "source batch");
  require_nonempty(tgt_feats.value(), "target batch");
  return ad::mean(critic.forward(src_feats)) - ad::mean(critic.forward(tgt_feats));
}

double critic_loss(const Mlp& critic, const Tensor& src_feats, const Tensor& tgt_feats) {
  ad::Tape tape;
  nn::BoundMlp d(critic, tape);
  return critic_loss(d, tape.leaf(src_feats), tape.leaf(tgt_feats)).item();
}

ad::Var encoder_loss(const nn::BoundMlp& critic, ad::Var tgt_feats) {
  require_nonempty(tgt_feats.value(), "target batch");
  return -ad::mean(critic.forward(tgt_feats));
}

double encoder_loss(const Mlp& critic, const Tensor& tgt_feats) {
  ad::Tape tape;
  nn::BoundMlp d(critic, tape);
  return encoder_loss(d, tape.leaf(tgt_feats)).item();
}

Tensor penalty_points(const Tensor& src_feats, const Tensor& tgt_feats, Rng& rng, bool include_endpoints) {
  require_nonempty(src_feats, "source batch");
  if (src_feats.rows() != tgt_feats.rows() || src_feats.cols() != tgt_feats.cols())
    throw std::invalid_argument("pipeline: gradient penalty needs equally shaped source and target batches");
  const Eigen::Index b = src_feats.rows();
  Tensor pts(include_endpoints ? 3 * b : b, src_feats.cols());
  for (Eigen::Index j = 0; j < b; ++j) {
    const double eps = rng.uniform();
    pts.row(j) = eps * src_feats.row(j) + (1.0 - eps) * tgt_feats.row(j);
  }
  if (include_endpoints) {
    pts.middleRows(b, b) = src_feats;
    pts.middleRows(2 * b, b) = tgt_feats;
  }
  return pts;
}

ad::Var gradient_penalty(const nn::BoundMlp& critic, const Tensor& src_feats, const Tensor& tgt_feats, Rng& rng,
                         bool include_endpoints) {
  ad::Tape& tape = critic.tape();
  ad::Var points = tape.leaf(penalty_points(src_feats, tgt_feats, rng, include_endpoints));
  // Rows are independent, so the gradient of the summed score holds every per-point gradient.
  ad::Var total = ad::sum(critic.forward(points));
  ad::Grads g = ad::backward(tape, total, {points}, /*record=*/true);
  ad::Var grad = g.node(points);
  ad::Var norms = ad::sqrt(ad::matmul(ad::square(grad), tape.ones(grad.cols(), 1)) + kPenaltyNormEps);
  return ad::mean(ad::square(norms - 1.0));
}

double gradient_penalty(const Mlp& critic, const Tensor& src_feats, const Tensor& tgt_feats, Rng& rng,
                        bool include_endpoints) {
  ad::Tape tape;
  nn::BoundMlp d(critic, tape);
  return gradient_penalty(d, src_feats, tgt_feats, rng, include_endpoints).item();
}

SourceBundle adapt_target(const SourceBundle& bundle, const Dataset& src, const Tensor& tgt_x, const AdaptConfig& cfg,
                          Rng& rng) {
  cfg.validate();
  bundle.check();
  if (src.size() == 0) throw std::invalid_argument("pipeline: adaptation needs source samples");
  require_nonempty(tgt_x, "target set");
  if (tgt_x.cols() != bundle.extractor.config().input_width())
    throw std::invalid_argument("pipeline: target dimension does not match the extractor");

  Rng init = rng.fork(stream::kInit);
  Rng batch = rng.fork(stream::kBatch);
  Rng penalty = rng.fork(stream::kPenalty);

  SourceBundle out = bundle;
  out.distilled = false;
  Mlp encoder = bundle.extractor;
  Mlp critic = nn::init_mlp(cfg.critic_config(bundle.extractor.config().output_width()), init);
  auto opt_critic = nn::Optimizer::adam(cfg.lr_critic, cfg.beta1, cfg.beta2);
  auto opt_encoder = nn::Optimizer::adam(cfg.lr_encoder, cfg.beta1, cfg.beta2);

  // The source extractor is frozen, so its features are computed once.
  const Tensor src_feats = nn::forward(bundle.extractor, src.x);
  const auto n_tgt = static_cast<std::size_t>(tgt_x.rows());

  auto critic_update = [&]() {
    const auto si = sample_batch(src.size(), cfg.batch_size, batch);
    const auto ti = sample_batch(n_tgt, cfg.batch_size, batch);
    const Tensor s = gather_rows(src_feats, si);
    const Tensor t = nn::forward(encoder, gather_rows(tgt_x, ti));

    ad::Tape tape;
    nn::BoundMlp d(critic, tape);
    ad::Var loss = -critic_loss(d, tape.leaf(s), tape.leaf(t)) +
                   cfg.alpha * gradient_penalty(d, s, t, penalty, cfg.include_endpoints);
    ad::Grads grads = ad::backward(tape, loss, d.params());
    opt_critic.step(critic.mutable_params(), nn::gradients_for(grads, d));
  };
  auto encoder_update = [&]() {
    const auto ti = sample_batch(n_tgt, cfg.batch_size, batch);
    ad::Tape tape;
    nn::BoundMlp e(encoder, tape);
    nn::BoundMlp d(critic, tape);
    ad::Var loss = encoder_loss(d, e.forward(tape.leaf(gather_rows(tgt_x, ti))));
    ad::Grads grads = ad::backward(tape, loss, e.params());
    opt_encoder.step(encoder.mutable_params(), nn::gradients_for(grads, e));
  };
  auto check_finite = [&]() {
    if (!std::isfinite(critic.squared_norm()) || !std::isfinite(encoder.squared_norm()))
      throw ad::NumericError("non-finite parameters");
  };

  const int total = cfg.steps + cfg.final_critic_steps;
  for (int step = 0; step < total; ++step) {
    try {
      if (step < cfg.steps) {
        for (int k = 0; k < cfg.n_critic; ++k) critic_update();
        encoder_update();
      } else {
        critic_update();
      }
      check_finite();
    } catch (const ad::NumericError& err) {
      throw std::runtime_error("pipeline: adaptation diverged at step " + std::to_string(step) + ": " + err.what());
    }
  }

  out.target_encoder = std::move(encoder);
  out.critic = std::move(critic);
  out.wd_estimate = estimate_wd(out, src, tgt_x);
  return out;
}

double estimate_wd(const SourceBundle& bundle, const Dataset& src, const Tensor& tgt_x) {
  if (!bundle.critic || !bundle.target_encoder) throw std::invalid_argument("pipeline: bundle missing critic");
  return critic_loss(*bundle.critic, nn::forward(bundle.extractor, src.x), nn::forward(*bundle.target_encoder, tgt_x));
}

std::vector<double> sample_distances(const SourceBundle& bundle, const Dataset& src, const Tensor& tgt_x) {
  if (!bundle.critic || !bundle.target_encoder) throw std::invalid_argument("pipeline: bundle missing critic");
  if (tgt_x.rows() < 1) throw std::invalid_argument("pipeline: target set is empty");
  const Tensor src_scores = nn::forward(*bundle.critic, nn::forward(bundle.extractor, src.x));
  const double tgt_mean = nn::forward(*bundle.critic, nn::forward(*bundle.target_encoder, tgt_x)).mean();
  std::vector<double> tau(static_cast<std::size_t>(src_scores.rows()));
  for (std::size_t j = 0; j < tau.size(); ++j) tau[j] = std::abs(src_scores(static_cast<Eigen::Index>(j), 0) - tgt_mean);
  return tau;
}

DistillSelection distill_select(std::vector<double> distances, double fraction, DistillRule rule) {
  const std::size_t n = distances.size();
  if (n < 2) throw std::invalid_argument("pipeline: distill selection needs at least two samples");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("pipeline: distill fraction must lie in (0, 1]");
  const auto count = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * fraction));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (rule == DistillRule::Closest)
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return distances[a] < distances[b]; });
  else
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return distances[a] > distances[b]; });

  DistillSelection sel;
  sel.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(count, n)));
  std::sort(sel.selected.begin(), sel.selected.end());
  sel.distances = std::move(distances);
  return sel;
}

SourceBundle distill_finetune(const SourceBundle& bundle, const Dataset& src, const DistillSelection& sel,
                              const TrainConfig& train, Rng& rng) {
  if (!bundle.adapted()) throw std::invalid_argument("pipeline: distilling needs an adapted bundle");
  if (sel.distances.size() != src.size())
    throw std::invalid_argument("pipeline: selection/dataset size mismatch (" + std::to_string(sel.distances.size()) +
                                " vs " + std::to_string(src.size()) + ")");
  for (auto i : sel.selected)
    if (i >= src.size()) throw std::invalid_argument("pipeline: selected index out of range");
  if (sel.selected.empty()) throw std::invalid_argument("pipeline: empty distill selection");
  train.validate();

  SourceBundle out = bundle;
  Rng batch = rng.fork(stream::kBatch);
  const Tensor feats = nn::forward(bundle.extractor, src.x);
  train_cross_entropy(nullptr, out.classifier, feats, src.y, sel.selected, train, batch, "distilling");
  out.distilled = true;
  return out;
}

DomainWeights domain_weight(std::span<const double> wd_estimates) {
  if (wd_estimates.empty()) throw std::invalid_argument("pipeline: no distance estimates");
  double min_sq = std::numeric_limits<double>::infinity();
  for (double l : wd_estimates) {
    if (!std::isfinite(l)) throw std::invalid_argument("pipeline: non-finite distance estimate");
    min_sq = std::min(min_sq, l * l);
  }
  DomainWeights w;
  std::vector<double> shifted;
  double total = 0.0;
  for (double l : wd_estimates) {
    w.raw.push_back(std::exp(-0.5 * l * l));
    shifted.push_back(std::exp(-0.5 * (l * l - min_sq)));
    total += shifted.back();
  }
  for (double s : shifted) w.normalized.push_back(s / total);
  return w;
}

DomainWeights uniform_weights(std::size_t count) {
  if (count == 0) throw std::invalid_argument("pipeline: no sources");
  DomainWeights w;
  w.raw.assign(count, 1.0);
  w.normalized.assign(count, 1.0 / static_cast<double>(count));
  return w;
}

Prediction predict(const Mlp& encoder, const Mlp& classifier, const Tensor& x) {
  Prediction p;
  p.probs = ad::softmax(nn::forward(classifier, nn::forward(encoder, x)));
  p.labels.resize(static_cast<std::size_t>(p.probs.rows()));
  for (Eigen::Index r = 0; r < p.probs.rows(); ++r) {
    Eigen::Index arg = 0;
    p.probs.row(r).maxCoeff(&arg);
    p.labels[static_cast<std::size_t>(r)] = static_cast<int>(arg);
  }
  return p;
}

Prediction predict_source(const SourceBundle& bundle, const Tensor& x) {
  if (!bundle.target_encoder) throw std::invalid_argument("pipeline: bundle missing target encoder (" + bundle.name + ")");
  return predict(*bundle.target_encoder, bundle.classifier, x);
}

Prediction aggregate_predict(std::span<const SourceBundle> bundles, const DomainWeights& weights, const Tensor& x) {
  if (bundles.empty()) throw std::invalid_argument("pipeline: no bundles to aggregate");
  if (weights.normalized.size() != bundles.size())
    throw std::invalid_argument("pipeline: weight count does not match bundle count");
  Prediction out;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    const Prediction p = predict_source(bundles[i], x);
    if (i == 0)
      out.probs = weights.normalized[0] * p.probs;
    else
      out.probs += weights.normalized[i] * p.probs;
  }
  out.labels.resize(static_cast<std::size_t>(out.probs.rows()));
  for (Eigen::Index r = 0; r < out.probs.rows(); ++r) {
    Eigen::Index arg = 0;
    out.probs.row(r).maxCoeff(&arg);
    out.labels[static_cast<std::size_t>(r)] = static_cast<int>(arg);
  }
  return out;
}

Prediction baseline_uniform(std::span<const SourceBundle> bundles, const Tensor& x) {
  return aggregate_predict(bundles, uniform_weights(bundles.size()), x);
}

SourceBundle baseline_source_combined(std::span<const Dataset> sources, const Tensor& tgt_x,
                                      const MlpConfig& extractor_cfg, const MlpConfig& classifier_cfg,
                                      const TrainConfig& train, const AdaptConfig& adapt, Rng& rng) {
  const Dataset pooled = data::concat(sources, "combined");
  Rng pre = rng.fork(1);
  Rng ada = rng.fork(2);
  SourceBundle b = pretrain_source(pooled, extractor_cfg, classifier_cfg, train, pre);
  return adapt_target(b, pooled, tgt_x, adapt, ada);
}

double baseline_single_best(std::span<const double> per_source_accuracy) {
  if (per_source_accuracy.empty()) throw std::invalid_argument("pipeline: no per-source accuracies");
  return *std::max_element(per_source_accuracy.begin(), per_source_accuracy.end());
}

std::uint64_t checksum(const Mlp& net) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : net.params()) {
    const std::int64_t dims[2] = {p.rows(), p.cols()};
    mix(dims, sizeof dims);
    mix(p.data(), sizeof(double) * static_cast<std::size_t>(p.size()));
  }
  return h;
}

}  // namespace mdda::pipeline
