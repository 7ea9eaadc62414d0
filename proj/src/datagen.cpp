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

#include "mdda/datagen.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mdda::data {

namespace {

Eigen::VectorXd translation_or_zero(const Eigen::VectorXd& t, int d) {
  return t.size() == 0 ? Eigen::VectorXd::Zero(d) : t;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size() && std::isfinite(out);
}

bool parse_int(const std::string& s, int& out) {
  const std::string t = trim(s);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size() && !t.empty();
}

}  // namespace

void DomainSpec::validate() const {
  if (n_classes < 1) throw std::invalid_argument("datagen: n_classes must be positive");
  if (d < 1) throw std::invalid_argument("datagen: d must be positive");
  if (static_cast<int>(means.size()) != n_classes)
    throw std::invalid_argument("datagen: expected " + std::to_string(n_classes) + " class means, got " +
                                std::to_string(means.size()));
  for (const auto& m : means)
    if (m.size() != d) throw std::invalid_argument("datagen: class mean has the wrong dimension");
  for (std::size_t i = 0; i < means.size(); ++i)
    for (std::size_t j = i + 1; j < means.size(); ++j)
      if (means[i] == means[j]) throw std::invalid_argument("datagen: class means must be pairwise distinct");
  if (!(cov_scale >= 0.0) || !std::isfinite(cov_scale)) throw std::invalid_argument("datagen: cov_scale must be >= 0");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw std::invalid_argument("datagen: scale must be positive");
  if (!std::isfinite(rotation)) throw std::invalid_argument("datagen: rotation must be finite");
  if (d < 2 && rotation != 0.0) throw std::invalid_argument("datagen: rotation needs d >= 2");
  if (translation.size() != 0 && translation.size() != d)
    throw std::invalid_argument("datagen: translation has the wrong dimension");
  if (!(label_noise >= 0.0 && label_noise < 0.5)) throw std::invalid_argument("datagen: label_noise must lie in [0, 0.5)");
}

Eigen::VectorXd DomainSpec::transform(const Eigen::VectorXd& p) const {
  Eigen::VectorXd q = p;
  if (d >= 2) {
    const double c = std::cos(rotation), s = std::sin(rotation);
    q(0) = c * p(0) - s * p(1);
    q(1) = s * p(0) + c * p(1);
  }
  return scale * q + translation_or_zero(translation, d);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.domain_name = domain_name;
  out.x.resize(static_cast<Eigen::Index>(indices.size()), x.cols());
  out.y.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= size()) throw std::out_of_range("datagen: subset index out of range");
    out.x.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(indices[r]));
    out.y.push_back(y[indices[r]]);
  }
  return out;
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw std::out_of_range("datagen: slice out of range");
  Dataset out;
  out.domain_name = domain_name;
  out.x = x.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
  out.y.assign(y.begin() + static_cast<std::ptrdiff_t>(begin), y.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

Dataset sample_domain(const DomainSpec& spec, std::size_t n, Rng& rng) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("datagen: sample count must be >= 1");
  Dataset ds;
  ds.domain_name = spec.name;
  ds.x.resize(static_cast<Eigen::Index>(n), spec.d);
  ds.y.resize(n);
  const auto classes = static_cast<std::uint64_t>(spec.n_classes);
  Eigen::VectorXd z(spec.d);
  for (std::size_t i = 0; i < n; ++i) {
    int label = static_cast<int>(rng.uniform_index(classes));
    for (int k = 0; k < spec.d; ++k) z(k) = rng.normal();
    const Eigen::VectorXd base = spec.means[static_cast<std::size_t>(label)] + spec.cov_scale * z;
    ds.x.row(static_cast<Eigen::Index>(i)) = spec.transform(base).transpose();
    if (rng.uniform() < spec.label_noise && spec.n_classes > 1) {
      const int other = static_cast<int>(rng.uniform_index(classes - 1));
      label = other >= label ? other + 1 : other;
    }
    ds.y[i] = label;
  }
  return ds;
}

std::vector<DomainSpec> make_shift_family(const DomainSpec& base, std::span<const ShiftDelta> shifts) {
  std::vector<DomainSpec> out;
  out.reserve(shifts.size());
  for (std::size_t i = 0; i < shifts.size(); ++i) {
    const ShiftDelta& delta = shifts[i];
    DomainSpec s = base;
    s.rotation = base.rotation + delta.rotation;
    s.scale = base.scale * delta.scale;
    if (delta.translation.size() != 0 || base.translation.size() != 0)
      s.translation = translation_or_zero(base.translation, base.d) + translation_or_zero(delta.translation, base.d);
    s.name = base.name + "_shift" + std::to_string(i);
    out.push_back(std::move(s));
  }
  return out;
}

Dataset concat(std::span<const Dataset> parts, std::string name) {
  if (parts.empty()) throw std::invalid_argument("datagen: concat of zero datasets");
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.x.cols() != parts.front().x.cols()) throw std::invalid_argument("datagen: concat dimension mismatch");
    rows += p.x.rows();
  }
  Dataset out;
  out.domain_name = std::move(name);
  out.x.resize(rows, parts.front().x.cols());
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.x.middleRows(r, p.x.rows()) = p.x;
    r += p.x.rows();
    out.y.insert(out.y.end(), p.y.begin(), p.y.end());
  }
  return out;
}

double mean_embedding_distance(const DomainSpec& a, const DomainSpec& b) {
  if (a.n_classes != b.n_classes || a.d != b.d) throw std::invalid_argument("datagen: specs are not comparable");
  double total = 0.0;
  for (int k = 0; k < a.n_classes; ++k) total += (a.class_center(k) - b.class_center(k)).norm();
  return total / a.n_classes;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("datagen: cannot open " + path.string() + " for writing");
  os << "y";
  for (Eigen::Index k = 0; k < ds.x.cols(); ++k) os << ",x" << k;
  os << "\n";
  char buf[32];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    os << ds.y[i];
    for (Eigen::Index k = 0; k < ds.x.cols(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.x(static_cast<Eigen::Index>(i), k));
      os << ',' << buf;
    }
    os << "\n";
  }
  if (!os) throw std::runtime_error("datagen: write failed for " + path.string());
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("datagen: cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("datagen: " + path.string() + ": dataset has zero rows");
  const auto header = split_commas(line);
  if (header.size() < 2 || trim(header[0]) != "y")
    throw std::runtime_error("datagen: " + path.string() + ": line 1: header must be y,x0,...");
  for (std::size_t k = 1; k < header.size(); ++k)
    if (trim(header[k]) != "x" + std::to_string(k - 1))
      throw std::runtime_error("datagen: " + path.string() + ": line 1: unexpected column '" + header[k] + "'");
  const std::size_t d = header.size() - 1;

  std::vector<int> labels;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_commas(line);
    const std::string where = "datagen: " + path.string() + ": line " + std::to_string(line_no) + ": ";
    if (fields.size() != d + 1)
      throw std::runtime_error(where + "expected " + std::to_string(d + 1) + " columns, got " +
                               std::to_string(fields.size()));
    int label = 0;
    if (!parse_int(fields[0], label) || label < 0)
      throw std::runtime_error(where + "label '" + trim(fields[0]) + "' is not a non-negative integer");
    labels.push_back(label);
    for (std::size_t k = 1; k <= d; ++k) {
      double v = 0.0;
      if (!parse_double(fields[k], v)) throw std::runtime_error(where + "malformed value '" + trim(fields[k]) + "'");
      values.push_back(v);
    }
  }
  if (labels.empty()) throw std::runtime_error("datagen: " + path.string() + ": dataset has zero rows");

  Dataset ds;
  ds.domain_name = path.stem().string();
  ds.y = std::move(labels);
  ds.x = Eigen::Map<Tensor>(values.data(), static_cast<Eigen::Index>(ds.y.size()), static_cast<Eigen::Index>(d));
  return ds;
}

nlohmann::json to_json(const DomainSpec& spec) {
  nlohmann::json means = nlohmann::json::array();
  for (const auto& m : spec.means) means.push_back(std::vector<double>(m.data(), m.data() + m.size()));
  const Eigen::VectorXd t = translation_or_zero(spec.translation, spec.d);
  return {{"name", spec.name},
          {"n_classes", spec.n_classes},
          {"d", spec.d},
          {"means", means},
          {"cov_scale", spec.cov_scale},
          {"rotation", spec.rotation},
          {"translation", std::vector<double>(t.data(), t.data() + t.size())},
          {"scale", spec.scale},
          {"label_noise", spec.label_noise}};
}

DomainSpec domain_spec_from_json(const nlohmann::json& j) {
  DomainSpec s;
  s.name = j.value("name", std::string("domain"));
  s.n_classes = j.at("n_classes").get<int>();
  s.d = j.value("d", 2);
  for (const auto& m : j.at("means")) {
    const auto v = m.get<std::vector<double>>();
    s.means.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  s.cov_scale = j.value("cov_scale", 1.0);
  s.rotation = j.value("rotation", 0.0);
  if (j.contains("translation")) {
    const auto v = j.at("translation").get<std::vector<double>>();
    s.translation = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  s.scale = j.value("scale", 1.0);
  s.label_noise = j.value("label_noise", 0.0);
  s.validate();
  return s;
}

}  // namespace mdda::data
