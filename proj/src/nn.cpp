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

#include "mdda/nn.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace mdda::nn {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::LeakyRelu: return "leaky_relu";
    case Activation::Tanh: return "tanh";
  }
  return "?";
}

const char* to_string(FinalActivation a) { return a == FinalActivation::None ? "none" : "tanh"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "leaky_relu") return Activation::LeakyRelu;
  if (s == "tanh") return Activation::Tanh;
  throw std::invalid_argument("nn: unknown activation '" + s + "'");
}

FinalActivation final_activation_from_string(const std::string& s) {
  if (s == "none") return FinalActivation::None;
  if (s == "tanh") return FinalActivation::Tanh;
  throw std::invalid_argument("nn: unknown final activation '" + s + "'");
}

void MlpConfig::validate() const {
  if (widths.size() < 2) throw std::invalid_argument("nn: an MLP needs at least two widths");
  for (int w : widths)
    if (w <= 0) throw std::invalid_argument("nn: layer widths must be positive");
  if (activation == Activation::LeakyRelu && !(slope > 0.0 && slope < 1.0))
    throw std::invalid_argument("nn: leaky_relu slope must lie in (0, 1)");
}

nlohmann::json to_json(const MlpConfig& config) {
  return {{"widths", config.widths},
          {"activation", to_string(config.activation)},
          {"slope", config.slope},
          {"final_activation", to_string(config.final_activation)}};
}

MlpConfig mlp_config_from_json(const nlohmann::json& j) {
  MlpConfig c;
  c.widths = j.at("widths").get<std::vector<int>>();
  c.activation = activation_from_string(j.value("activation", std::string("relu")));
  c.slope = j.value("slope", 0.2);
  c.final_activation = final_activation_from_string(j.value("final_activation", std::string("none")));
  c.validate();
  return c;
}

Mlp::Mlp(MlpConfig config, std::vector<Tensor> params) : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  if (params_.size() != 2 * config_.layer_count())
    throw std::invalid_argument("nn: parameter count does not match config");
  for (std::size_t l = 0; l < config_.layer_count(); ++l) {
    const Tensor& w = params_[2 * l];
    const Tensor& b = params_[2 * l + 1];
    if (w.rows() != config_.widths[l + 1] || w.cols() != config_.widths[l])
      throw std::invalid_argument("nn: weight " + std::to_string(l) + " has the wrong shape");
    if (b.rows() != 1 || b.cols() != config_.widths[l + 1])
      throw std::invalid_argument("nn: bias " + std::to_string(l) + " has the wrong shape");
  }
}

double Mlp::squared_norm() const {
  double s = 0.0;
  for (const auto& p : params_) s += p.squaredNorm();
  return s;
}

Mlp init_mlp(const MlpConfig& config, Rng& rng) {
  config.validate();
  std::vector<Tensor> params;
  for (std::size_t l = 0; l < config.layer_count(); ++l) {
    const int fan_in = config.widths[l];
    const int fan_out = config.widths[l + 1];
    const double bound = config.activation == Activation::Tanh ? std::sqrt(6.0 / (fan_in + fan_out))
                                                               : std::sqrt(6.0 / fan_in);
    Tensor w(fan_out, fan_in);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
    params.push_back(std::move(w));
    params.push_back(Tensor::Zero(1, fan_out));
  }
  return Mlp(config, std::move(params));
}

BoundMlp::BoundMlp(const Mlp& net, ad::Tape& tape) : config_(&net.config()), tape_(&tape) {
  params_.reserve(net.params().size());
  for (const auto& p : net.params()) params_.push_back(tape.leaf(p));
}

ad::Var BoundMlp::forward(ad::Var x) const {
  if (x.cols() != config_->input_width())
    throw ad::ShapeError("nn: input width " + std::to_string(x.cols()) + " does not match " +
                         std::to_string(config_->input_width()));
  ad::Var ones = tape_->ones(x.rows(), 1);
  ad::Var h = x;
  const std::size_t layers = config_->layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    h = ad::matmul(h, ad::transpose(params_[2 * l])) + ad::matmul(ones, params_[2 * l + 1]);
    if (l + 1 < layers) {
      switch (config_->activation) {
        case Activation::Relu: h = ad::relu(h); break;
        case Activation::LeakyRelu: h = ad::leaky_relu(h, config_->slope); break;
        case Activation::Tanh: h = ad::tanh(h); break;
      }
    } else if (config_->final_activation == FinalActivation::Tanh) {
      h = ad::tanh(h);
    }
  }
  return h;
}

Tensor forward(const Mlp& net, const Tensor& x) {
  ad::Tape tape;
  BoundMlp bound(net, tape);
  return bound.forward(tape.leaf(x)).value();
}

void clone_params(const Mlp& src, Mlp& dst) {
  if (!(src.config() == dst.config())) throw std::invalid_argument("nn: clone_params config mismatch");
  auto& out = dst.mutable_params();
  out.assign(src.params().begin(), src.params().end());
}

std::vector<Tensor> gradients_for(const ad::Grads& grads, const BoundMlp& bound) {
  std::vector<Tensor> out;
  out.reserve(bound.params().size());
  for (ad::Var p : bound.params()) out.push_back(grads[p]);
  return out;
}

Optimizer::Optimizer(Kind kind, double lr, double beta1, double beta2, double eps)
    : kind_(kind), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr > 0.0)) throw std::invalid_argument("nn: learning rate must be positive");
  if (kind == Kind::Adam && !(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0))
    throw std::invalid_argument("nn: invalid adam hyperparameters");
}

Optimizer Optimizer::sgd(double lr) { return Optimizer(Kind::Sgd, lr, 0.0, 0.0, 1.0); }

Optimizer Optimizer::adam(double lr, double beta1, double beta2, double eps) {
  return Optimizer(Kind::Adam, lr, beta1, beta2, eps);
}

void Optimizer::step(std::vector<Tensor>& params, std::span<const Tensor> grads) {
  if (grads.size() != params.size())
    throw std::invalid_argument("nn: missing gradient entry (" + std::to_string(grads.size()) + " gradients for " +
                                std::to_string(params.size()) + " parameters)");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (grads[i].rows() != params[i].rows() || grads[i].cols() != params[i].cols())
      throw std::invalid_argument("nn: gradient " + std::to_string(i) + " shape mismatch");

  ++t_;
  if (kind_ == Kind::Sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr_ * grads[i];
    return;
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Tensor::Zero(p.rows(), p.cols()));
      v_.push_back(Tensor::Zero(p.rows(), p.cols()));
    }
  }
  if (m_.size() != params.size()) throw std::invalid_argument("nn: optimizer bound to a different parameter set");
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseAbs2();
    params[i].array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void put_f64(std::ostream& os, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("nn: truncated parameter file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("nn: truncated parameter file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace

void save_params(const Mlp& net, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("nn: cannot open " + path.string() + " for writing");
  os.write("MDDA", 4);
  put_u32(os, kParamFormatVersion);
  put_u32(os, static_cast<std::uint32_t>(net.params().size()));
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    const Tensor& p = net.params()[i];
    if (i % 2 == 1) {
      put_u32(os, 1);
      put_u32(os, static_cast<std::uint32_t>(p.cols()));
    } else {
      put_u32(os, 2);
      put_u32(os, static_cast<std::uint32_t>(p.rows()));
      put_u32(os, static_cast<std::uint32_t>(p.cols()));
    }
    for (Eigen::Index k = 0; k < p.size(); ++k) put_f64(os, p.data()[k]);
  }
  if (!os) throw std::runtime_error("nn: write failed for " + path.string());
}

Mlp load_mlp(const MlpConfig& config, const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("nn: cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "MDDA")
    throw std::runtime_error("nn: " + path.string() + " is not a parameter file");
  const std::uint32_t version = get_u32(is);
  if (version != kParamFormatVersion)
    throw std::runtime_error("nn: unsupported parameter file version " + std::to_string(version));
  const std::uint32_t count = get_u32(is);
  std::vector<Tensor> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t rank = get_u32(is);
    if (rank < 1 || rank > 2) throw std::runtime_error("nn: unsupported parameter rank " + std::to_string(rank));
    std::uint32_t rows = 1, cols = get_u32(is);
    if (rank == 2) {
      rows = cols;
      cols = get_u32(is);
    }
    Tensor p(rows, cols);
    for (Eigen::Index k = 0; k < p.size(); ++k) p.data()[k] = get_f64(is);
    params.push_back(std::move(p));
  }
  return Mlp(config, std::move(params));
}

}  // namespace mdda::nn
