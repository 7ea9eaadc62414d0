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

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mdda::nn {

using ad::Tensor;

enum class Activation { Relu, LeakyRelu, Tanh };
enum class FinalActivation { None, Tanh };

const char* to_string(Activation a);
const char* to_string(FinalActivation a);
Activation activation_from_string(const std::string& s);
FinalActivation final_activation_from_string(const std::string& s);

struct MlpConfig {
  std::vector<int> widths;
  Activation activation = Activation::Relu;
  double slope = 0.2;  // leaky_relu only
  FinalActivation final_activation = FinalActivation::None;

  /// Throws std::invalid_argument on fewer than two widths, a non-positive
  /// width, or a leaky slope outside (0, 1).
  void validate() const;
  int input_width() const { return widths.front(); }
  int output_width() const { return widths.back(); }
  std::size_t layer_count() const { return widths.size() - 1; }

  bool operator==(const MlpConfig&) const = default;
};

nlohmann::json to_json(const MlpConfig& config);
MlpConfig mlp_config_from_json(const nlohmann::json& j);

/// Multi-layer perceptron. Parameters are stored as [W0, b0, W1, b1, ...]
/// with W_i of shape widths[i+1] x widths[i] and b_i of shape 1 x widths[i+1].
class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpConfig config, std::vector<Tensor> params);

  const MlpConfig& config() const { return config_; }
  std::span<const Tensor> params() const { return params_; }
  std::vector<Tensor>& mutable_params() { return params_; }
  const Tensor& weight(std::size_t layer) const { return params_.at(2 * layer); }
  const Tensor& bias(std::size_t layer) const { return params_.at(2 * layer + 1); }

  double squared_norm() const;

 private:
  MlpConfig config_;
  std::vector<Tensor> params_;
};

/// He-uniform weights for relu/leaky_relu, Xavier-uniform for tanh; zero biases.
Mlp init_mlp(const MlpConfig& config, Rng& rng);

/// An Mlp's parameters registered as leaves on one tape.
class BoundMlp {
 public:
  BoundMlp(const Mlp& net, ad::Tape& tape);

  ad::Var forward(ad::Var x) const;
  std::span<const ad::Var> params() const { return params_; }
  const MlpConfig& config() const { return *config_; }
  ad::Tape& tape() const { return *tape_; }

 private:
  const MlpConfig* config_;
  ad::Tape* tape_;
  std::vector<ad::Var> params_;
};

/// Inference on plain values.
Tensor forward(const Mlp& net, const Tensor& x);

/// Copies parameters; throws std::invalid_argument when the configs differ.
void clone_params(const Mlp& src, Mlp& dst);

std::vector<Tensor> gradients_for(const ad::Grads& grads, const BoundMlp& bound);

class Optimizer {
 public:
  enum class Kind { Sgd, Adam };

  static Optimizer sgd(double lr);
  static Optimizer adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// params and grads are matched by position; missing entries throw.
  void step(std::vector<Tensor>& params, std::span<const Tensor> grads);

  Kind kind() const { return kind_; }
  double learning_rate() const { return lr_; }
  std::uint64_t steps() const { return t_; }

 private:
  Optimizer(Kind kind, double lr, double beta1, double beta2, double eps);

  Kind kind_;
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

// Flat binary parameter file: "MDDA", u32 version, u32 count, then per
// parameter u32 rank, u32 dims..., f64 values, all little-endian.
inline constexpr std::uint32_t kParamFormatVersion = 1;

void save_params(const Mlp& net, const std::filesystem::path& path);
/// Reads a parameter file and checks it against config.
Mlp load_mlp(const MlpConfig& config, const std::filesystem::path& path);

}  // namespace mdda::nn
