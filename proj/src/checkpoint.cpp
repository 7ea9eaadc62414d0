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

#include <fstream>
#include <stdexcept>

namespace mdda::pipeline {

namespace fs = std::filesystem;

void save_bundle(const SourceBundle& bundle, const fs::path& dir, const std::string& config_hash) {
  bundle.check();
  fs::create_directories(dir);
  nlohmann::json meta;
  meta["name"] = bundle.name;
  meta["stage"] = bundle.stage();
  meta["wd_estimate"] = bundle.wd_estimate ? nlohmann::json(*bundle.wd_estimate) : nlohmann::json(nullptr);
  meta["distilled"] = bundle.distilled;
  meta["config_hash"] = config_hash;
  meta["extractor"] = nn::to_json(bundle.extractor.config());
  meta["classifier"] = nn::to_json(bundle.classifier.config());
  nn::save_params(bundle.extractor, dir / "extractor.bin");
  nn::save_params(bundle.classifier, dir / "classifier.bin");
  if (bundle.target_encoder) {
    meta["target_encoder"] = nn::to_json(bundle.target_encoder->config());
    meta["critic"] = nn::to_json(bundle.critic->config());
    nn::save_params(*bundle.target_encoder, dir / "target_encoder.bin");
    nn::save_params(*bundle.critic, dir / "critic.bin");
  } else {
    fs::remove(dir / "target_encoder.bin");
    fs::remove(dir / "critic.bin");
  }
  std::ofstream os(dir / "meta.json");
  if (!os) throw std::runtime_error("pipeline: cannot write " + (dir / "meta.json").string());
  os << meta.dump(2) << "\n";
}

nlohmann::json load_bundle_meta(const fs::path& dir) {
  std::ifstream is(dir / "meta.json");
  if (!is) throw std::runtime_error("pipeline: no bundle checkpoint at " + dir.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("pipeline: malformed " + (dir / "meta.json").string() + ": " + e.what());
  }
}

SourceBundle load_bundle(const fs::path& dir) {
  const nlohmann::json meta = load_bundle_meta(dir);
  SourceBundle b;
  b.name = meta.at("name").get<std::string>();
  b.extractor = nn::load_mlp(nn::mlp_config_from_json(meta.at("extractor")), dir / "extractor.bin");
  b.classifier = nn::load_mlp(nn::mlp_config_from_json(meta.at("classifier")), dir / "classifier.bin");
  if (meta.contains("target_encoder")) {
    b.target_encoder = nn::load_mlp(nn::mlp_config_from_json(meta.at("target_encoder")), dir / "target_encoder.bin");
    b.critic = nn::load_mlp(nn::mlp_config_from_json(meta.at("critic")), dir / "critic.bin");
    if (meta.at("wd_estimate").is_null()) throw std::runtime_error("pipeline: adapted checkpoint without wd_estimate");
    b.wd_estimate = meta.at("wd_estimate").get<double>();
  }
  b.distilled = meta.value("distilled", false);
  b.check();
  return b;
}

}  // namespace mdda::pipeline
