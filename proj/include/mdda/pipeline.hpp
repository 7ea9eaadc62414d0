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

#pragma once

#include "mdda/autodiff.hpp"
#include "mdda/datagen.hpp"
#include "mdda/nn.hpp"
#include "mdda/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mdda::pipeline {

using ad::Tensor;
using data::Dataset;
using nn::Mlp;
using nn::MlpConfig;

/// Minibatch cross-entropy training schedule (adam).
struct TrainConfig {
  int steps = 2000;
  int batch_size = 64;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;

  void validate() const;
};

struct AdaptConfig {
  double alpha = 10.0;  // gradient-penalty weight
  int n_critic = 5;     // critic updates per encoder update
  int steps = 300;      // encoder updates
  int final_critic_steps = 0;  // critic-only updates after the last encoder update
  int batch_size = 64;
  double lr_critic = 1e-2;
  double lr_encoder = 2e-6;
  double beta1 = 0.5;
  double beta2 = 0.9;
  bool include_endpoints = true;
  std::vector<int> critic_hidden{32};
  double critic_slope = 0.2;

  void validate() const;
  /// Critic shape for a given feature width: leaky_relu hidden layers, unbounded scalar output.
  MlpConfig critic_config(int feature_width) const;
};

enum class DistillRule { Closest, Farthest };

const char* to_string(DistillRule r);
DistillRule distill_rule_from_string(const std::string& s);

struct DistillConfig {
  TrainConfig train{300, 64, 1e-3, 0.9, 0.999};
  double fraction = 0.5;
  DistillRule rule = DistillRule::Closest;
};

/// Per-source artifacts. target_encoder, critic and wd_estimate are set
/// together by adapt_target; distilled by distill_finetune.
struct SourceBundle {
  std::string name;
  Mlp extractor;
  Mlp classifier;
  std::optional<Mlp> target_encoder;
  std::optional<Mlp> critic;
  std::optional<double> wd_estimate;
  bool distilled = false;

  bool adapted() const { return target_encoder.has_value(); }
  /// 1 pretrained, 2 adapted, 3 distilled.
  int stage() const { return distilled ? 3 : adapted() ? 2 : 1; }
  void check() const;
};

struct DistillSelection {
  std::vector<double> distances;
  std::vector<std::size_t> selected;  // ascending

  std::vector<std::size_t> unselected() const;
};

struct DomainWeights {
  std::vector<double> raw;
  std::vector<double> normalized;
};

struct Prediction {
  Tensor probs;
  std::vector<int> labels;
};

/// Indices drawn uniformly with replacement.
std::vector<std::size_t> sample_batch(std::size_t n, int batch_size, Rng& rng);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

SourceBundle pretrain_source(const Dataset& src, const MlpConfig& extractor_cfg, const MlpConfig& classifier_cfg,
                             const TrainConfig& train, Rng& rng);

/// mean D(src) - mean D(tgt).
ad::Var critic_loss(const nn::BoundMlp& critic, ad::Var src_feats, ad::Var tgt_feats);
double critic_loss(const Mlp& critic, const Tensor& src_feats, const Tensor& tgt_feats);

/// -mean D(tgt).
ad::Var encoder_loss(const nn::BoundMlp& critic, ad::Var tgt_feats);
double encoder_loss(const Mlp& critic, const Tensor& tgt_feats);

/// Points at which the penalty is evaluated: one random interpolate per
/// (src, tgt) row pair, followed by the src and tgt rows themselves when
/// include_endpoints is set.
Tensor penalty_points(const Tensor& src_feats, const Tensor& tgt_feats, Rng& rng, bool include_endpoints);

inline constexpr double kPenaltyNormEps = 1e-12;

/// mean over penalty_points of (sqrt(|grad_x D(x)|^2 + 1e-12) - 1)^2. The
/// input gradient is recorded on the tape, so the result is differentiable
/// with respect to the critic parameters.
ad::Var gradient_penalty(const nn::BoundMlp& critic, const Tensor& src_feats, const Tensor& tgt_feats, Rng& rng,
                         bool include_endpoints);
double gradient_penalty(const Mlp& critic, const Tensor& src_feats, const Tensor& tgt_feats, Rng& rng,
                        bool include_endpoints);

/// Adversarial target mapping: clones the source extractor into a target
/// encoder, trains a fresh critic with n_critic updates of
/// -critic_loss + alpha * penalty per encoder update on encoder_loss. The
/// source extractor and classifier are left untouched. The critic then gets
/// final_critic_steps more updates against the frozen final encoder before
/// the distance is estimated.
SourceBundle adapt_target(const SourceBundle& bundle, const Dataset& src, const Tensor& tgt_x, const AdaptConfig& cfg,
                          Rng& rng);

/// critic_loss over the full source and target sets at final parameters.
double estimate_wd(const SourceBundle& bundle, const Dataset& src, const Tensor& tgt_x);

/// |D(F(x_j)) - mean_k D(F^T(t_k))| for every source sample.
std::vector<double> sample_distances(const SourceBundle& bundle, const Dataset& src, const Tensor& tgt_x);

/// ceil(N * fraction) indices with the smallest (Closest) or largest
/// (Farthest) distance; ties go to the lower index.
DistillSelection distill_select(std::vector<double> distances, double fraction = 0.5,
                                DistillRule rule = DistillRule::Closest);

/// Fine-tunes only the classifier on the selected samples, features from the frozen extractor.
SourceBundle distill_finetune(const SourceBundle& bundle, const Dataset& src, const DistillSelection& sel,
                              const TrainConfig& train, Rng& rng);

/// raw = exp(-L^2 / 2); normalized = raw / sum(raw), computed with the
/// smallest L^2 factored out so it stays defined when raw underflows.
DomainWeights domain_weight(std::span<const double> wd_estimates);
DomainWeights uniform_weights(std::size_t count);

Prediction predict(const Mlp& encoder, const Mlp& classifier, const Tensor& x);
/// softmax(C(F^T(x))) for one adapted bundle.
Prediction predict_source(const SourceBundle& bundle, const Tensor& x);
/// sum_i normalized_i * softmax(C_i(F^T_i(x))), argmax per row.
Prediction aggregate_predict(std::span<const SourceBundle> bundles, const DomainWeights& weights, const Tensor& x);

Prediction baseline_uniform(std::span<const SourceBundle> bundles, const Tensor& x);
/// Pools every source into one dataset and runs pretraining and adaptation on it.
SourceBundle baseline_source_combined(std::span<const Dataset> sources, const Tensor& tgt_x,
                                      const MlpConfig& extractor_cfg, const MlpConfig& classifier_cfg,
                                      const TrainConfig& train, const AdaptConfig& adapt, Rng& rng);
double baseline_single_best(std::span<const double> per_source_accuracy);

std::uint64_t checksum(const Mlp& net);

/// Bundle checkpoint directory: one parameter file per network plus meta.json.
void save_bundle(const SourceBundle& bundle, const std::filesystem::path& dir, const std::string& config_hash);
SourceBundle load_bundle(const std::filesystem::path& dir);
nlohmann::json load_bundle_meta(const std::filesystem::path& dir);

}  // namespace mdda::pipeline
