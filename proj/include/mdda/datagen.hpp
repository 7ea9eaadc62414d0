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
#include "mdda/rng.hpp"

#include <Eigen/Dense>
#include "json.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mdda::data {

using ad::Tensor;

/// Gaussian-mixture domain under a rigid motion and scale:
///   x = scale * R(rotation) * (mean_y + cov_scale * z) + translation
/// with R acting on the first two coordinates.
struct DomainSpec {
  std::string name = "domain";
  int n_classes = 2;
  int d = 2;
  std::vector<Eigen::VectorXd> means;
  double cov_scale = 1.0;
  double rotation = 0.0;
  Eigen::VectorXd translation;  // empty means zero
  double scale = 1.0;
  double label_noise = 0.0;

  void validate() const;
  /// Applies scale, rotation and translation to a base-frame point.
  Eigen::VectorXd transform(const Eigen::VectorXd& p) const;
  Eigen::VectorXd class_center(int k) const { return transform(means.at(static_cast<std::size_t>(k))); }
};

struct Dataset {
  Tensor x;
  std::vector<int> y;
  std::string domain_name;

  std::size_t size() const { return y.size(); }
  int dim() const { return static_cast<int>(x.cols()); }
  Dataset subset(std::span<const std::size_t> indices) const;
  /// Rows [begin, end).
  Dataset slice(std::size_t begin, std::size_t end) const;
};

struct ShiftDelta {
  double rotation = 0.0;
  Eigen::VectorXd translation;  // empty means zero
  double scale = 1.0;
};

/// Per sample, in order: label, d normals, one uniform for label noise, and
/// one more index draw when the label is flipped.
Dataset sample_domain(const DomainSpec& spec, std::size_t n, Rng& rng);

/// Rotations add, translations add, scales multiply.
std::vector<DomainSpec> make_shift_family(const DomainSpec& base, std::span<const ShiftDelta> shifts);

Dataset concat(std::span<const Dataset> parts, std::string name);

/// Mean over classes of the distance between class centres of two specs.
double mean_embedding_distance(const DomainSpec& a, const DomainSpec& b);

/// Header "y,x0,...,x{d-1}", values printed with 17 significant digits.
void save_csv(const Dataset& ds, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path);

nlohmann::json to_json(const DomainSpec& spec);
DomainSpec domain_spec_from_json(const nlohmann::json& j);

}  // namespace mdda::data
