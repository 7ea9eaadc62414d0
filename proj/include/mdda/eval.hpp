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

#include "mdda/datagen.hpp"
#include "mdda/nn.hpp"
#include "mdda/pipeline.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace mdda::eval {

using ad::Tensor;

/// Fraction of equal entries; lengths must match and be >= 1.
double accuracy(std::span<const int> predicted, std::span<const int> truth);

struct DomainEntry {
  data::DomainSpec spec;
  std::size_t n = 500;
};

/// Hidden layers and activation of a network whose input and output widths
/// are fixed by its role.
struct NetworkShape {
  std::vector<int> hidden;
  nn::Activation activation = nn::Activation::Relu;
  double slope = 0.2;
  nn::FinalActivation final_activation = nn::FinalActivation::None;

  nn::MlpConfig config(int in, int out) const;
};

/// Extra method variants reported next to the full method ("mdda").
struct Ablations {
  bool uniform = false;          // uniform weights, distilled classifiers
  bool no_distill = false;       // domain weights, stage-2 classifiers
  bool source_combined = false;  // all sources pooled into one
  bool single_best = false;      // best single adapted source

  bool operator==(const Ablations&) const = default;
};

inline constexpr int kSchemaVersion = 1;

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::uint64_t master_seed = 0;
  int repeat = 1;
  std::vector<DomainEntry> sources;
  DomainEntry target;
  NetworkShape extractor{{32, 16}};
  NetworkShape classifier{};
  pipeline::TrainConfig pretrain{};
  pipeline::AdaptConfig adapt{};
  pipeline::DistillConfig distill{};
  bool distill_enabled = true;
  Ablations ablations{};

  void validate() const;
  nn::MlpConfig extractor_config() const;
  nn::MlpConfig classifier_config() const;
  std::vector<std::string> variants() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

struct SourceResult {
  std::string name;
  double wd_estimate = 0.0;
  double raw_weight = 0.0;
  double normalized_weight = 0.0;
  double solo_accuracy = 0.0;
  std::map<std::string, std::string> checksums;

  bool operator==(const SourceResult&) const = default;
};

struct TrialResult {
  int trial = 0;
  std::uint64_t seed = 0;
  std::map<std::string, double> accuracy;
  std::vector<SourceResult> sources;

  bool operator==(const TrialResult&) const = default;
};

struct VariantSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for one trial
  std::vector<double> values;

  bool operator==(const VariantSummary&) const = default;
};

struct Report {
  int schema_version = kSchemaVersion;
  std::uint64_t master_seed = 0;
  std::string config_hash;
  std::vector<std::string> variants;
  std::vector<TrialResult> trials;
  std::map<std::string, VariantSummary> aggregate;

  bool operator==(const Report&) const = default;
};

VariantSummary summarize(std::span<const double> values);

/// Data for one trial: sources in config order, target split 50/50 into an
/// unlabeled adaptation half and a labeled test half.
struct TrialData {
  std::vector<data::Dataset> sources;
  data::Dataset target_adapt;
  data::Dataset target_test;
};

std::uint64_t trial_seed(std::uint64_t master_seed, int trial);
TrialData generate_trial_data(const ExperimentConfig& cfg, std::uint64_t seed);

/// Random streams of source i within a trial, one per stage (1, 2, 3).
Rng stage_stream(std::uint64_t seed, std::size_t source, int stage);

/// Everything one trial produces, kept for inspection.
struct TrialArtifacts {
  TrialData data;
  std::vector<pipeline::SourceBundle> adapted;    // after stage 2
  std::vector<pipeline::SourceBundle> distilled;  // after stage 3 (empty when disabled)
  pipeline::DomainWeights weights;
  std::map<std::string, pipeline::Prediction> predictions;
};

using ProgressFn = std::function<void(const std::string&)>;

TrialResult run_trial(const ExperimentConfig& cfg, int trial, TrialArtifacts* artifacts = nullptr,
                      const ProgressFn& progress = {});
Report run_experiment(const ExperimentConfig& cfg, const ProgressFn& progress = {});

nlohmann::json to_json(const Report& r);
Report report_from_json(const nlohmann::json& j);

/// Writes report.json and summary.csv into dir.
void export_report(const Report& r, const std::filesystem::path& dir);

/// One domain's points; labels select the colour.
struct ScatterSeries {
  std::string domain;
  Tensor points;  // n x 2
  std::vector<int> labels;
};

/// Standalone SVG: marker shape per domain, colour per class, legend, axes
/// over the data bounding box with a 5% margin.
std::string render_scatter(std::span<const ScatterSeries> series);
void export_scatter(std::span<const ScatterSeries> series, const std::filesystem::path& path);

}  // namespace mdda::eval
