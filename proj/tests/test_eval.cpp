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

#include "mdda/eval.hpp"

#include "test_util.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace mdda {
namespace {

using ad::Tensor;
namespace pt = boost::property_tree;

data::DomainSpec blobs(const std::string& name, double rotation) {
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

eval::ExperimentConfig small_config() {
  eval::ExperimentConfig cfg;
  cfg.master_seed = 31;
  cfg.repeat = 2;
  cfg.sources = {{blobs("a", 0.2), 120}, {blobs("b", 1.0), 100}};
  cfg.target = {blobs("tgt", 0.0), 120};
  cfg.pretrain.steps = 60;
  cfg.adapt.steps = 8;
  cfg.distill.train.steps = 20;
  return cfg;
}

TEST(Accuracy, Examples) {
  const std::vector<int> a{0, 1, 1, 0}, b{0, 1, 0, 0}, c{1, 0, 0, 1};
  EXPECT_EQ(eval::accuracy(a, a), 1.0);
  EXPECT_EQ(eval::accuracy(a, c), 0.0);
  EXPECT_EQ(eval::accuracy(a, b), 0.75);
  EXPECT_THROW(eval::accuracy(a, std::vector<int>{0}), std::invalid_argument);
  EXPECT_THROW(eval::accuracy(std::vector<int>{}, std::vector<int>{}), std::invalid_argument);
}

TEST(Summary, SampleStatistics) {
  const std::vector<double> v{0.5, 0.7, 0.9};
  const auto s = eval::summarize(v);
  EXPECT_NEAR(s.mean, 0.7, 1e-15);
  EXPECT_NEAR(s.std, 0.2, 1e-15);
  EXPECT_EQ(eval::summarize(std::vector<double>{0.3}).std, 0.0);
}

TEST(Seeds, TrialSeedsAreStreamDraws) {
  Rng m(5);
  for (int t = 0; t < 4; ++t) EXPECT_EQ(eval::trial_seed(5, t), m.next());
  EXPECT_NE(eval::trial_seed(5, 0), eval::trial_seed(6, 0));
}

TEST(Config, JsonRoundTripAndValidation) {
  eval::ExperimentConfig cfg = small_config();
  cfg.ablations.uniform = true;
  cfg.distill.rule = pipeline::DistillRule::Farthest;
  cfg.adapt.critic_hidden = {8, 4};
  const auto back = eval::experiment_config_from_json(eval::to_json(cfg));
  EXPECT_EQ(eval::to_json(back), eval::to_json(cfg));
  EXPECT_EQ(eval::config_hash(back), eval::config_hash(cfg));
  EXPECT_EQ(eval::config_hash(cfg).size(), 16u);
  cfg.master_seed += 1;
  EXPECT_NE(eval::config_hash(back), eval::config_hash(cfg));

  auto j = eval::to_json(small_config());
  j.erase("schema_version");
  EXPECT_THROW(eval::experiment_config_from_json(j), std::invalid_argument);
  j = eval::to_json(small_config());
  j["schema_version"] = 99;
  EXPECT_THROW(eval::experiment_config_from_json(j), std::invalid_argument);
  j = eval::to_json(small_config());
  j["sources"] = nlohmann::json::array();
  EXPECT_THROW(eval::experiment_config_from_json(j), std::invalid_argument);
  j = eval::to_json(small_config());
  j["repeat"] = 0;
  EXPECT_THROW(eval::experiment_config_from_json(j), std::invalid_argument);

  auto dup = small_config();
  dup.sources[1].spec.name = "a";
  EXPECT_THROW(dup.validate(), std::invalid_argument);
  auto dim = small_config();
  dim.sources[0].spec.n_classes = 2;
  dim.sources[0].spec.means.pop_back();
  EXPECT_THROW(dim.validate(), std::invalid_argument);
  EXPECT_THROW(eval::load_experiment_config("/nonexistent/cfg.json"), std::runtime_error);
}

TEST(Config, Variants) {
  auto cfg = small_config();
  EXPECT_EQ(cfg.variants(), (std::vector<std::string>{"mdda"}));
  cfg.ablations = {true, true, true, true};
  EXPECT_EQ(cfg.variants(), (std::vector<std::string>{"mdda", "uniform", "no_distill", "source_combined", "single_best"}));
}

TEST(TrialData, SplitIsHalfAndHalf) {
  const auto cfg = small_config();
  const auto d = eval::generate_trial_data(cfg, 77);
  ASSERT_EQ(d.sources.size(), 2u);
  EXPECT_EQ(d.sources[0].size(), 120u);
  EXPECT_EQ(d.sources[1].size(), 100u);
  EXPECT_EQ(d.target_adapt.size(), 60u);
  EXPECT_EQ(d.target_test.size(), 60u);
  const auto again = eval::generate_trial_data(cfg, 77);
  EXPECT_EQ(again.target_test.x, d.target_test.x);
}

TEST(Experiment, SingleMatchedSourceEqualsSolo) {
  eval::ExperimentConfig cfg = small_config();
  cfg.repeat = 1;
  cfg.sources = {{blobs("only", 0.0), 120}};
  const auto rep = eval::run_experiment(cfg);
  EXPECT_EQ(rep.variants, (std::vector<std::string>{"mdda"}));
  ASSERT_EQ(rep.trials.size(), 1u);
  EXPECT_EQ(rep.trials[0].accuracy.size(), 1u);
  EXPECT_EQ(rep.trials[0].accuracy.at("mdda"), rep.trials[0].sources[0].solo_accuracy);
  EXPECT_EQ(rep.trials[0].sources[0].normalized_weight, 1.0);
}

struct ReportFixture : ::testing::Test {
  static void SetUpTestSuite() {
    cfg = new eval::ExperimentConfig(small_config());
    cfg->ablations = {true, true, true, true};
    report = new eval::Report(eval::run_experiment(*cfg));
  }
  static void TearDownTestSuite() {
    delete report;
    delete cfg;
  }
  static eval::ExperimentConfig* cfg;
  static eval::Report* report;
};
eval::ExperimentConfig* ReportFixture::cfg = nullptr;
eval::Report* ReportFixture::report = nullptr;

TEST_F(ReportFixture, StructureAndAggregates) {
  const auto& r = *report;
  EXPECT_EQ(r.variants, cfg->variants());
  EXPECT_EQ(r.config_hash, eval::config_hash(*cfg));
  ASSERT_EQ(r.trials.size(), 2u);
  for (const auto& v : r.variants) {
    std::vector<double> values;
    for (const auto& t : r.trials) {
      const double a = t.accuracy.at(v);
      EXPECT_GE(a, 0.0);
      EXPECT_LE(a, 1.0);
      values.push_back(a);
    }
    const auto s = eval::summarize(values);
    EXPECT_NEAR(r.aggregate.at(v).mean, s.mean, 1e-12);
    EXPECT_NEAR(r.aggregate.at(v).std, s.std, 1e-12);
  }
  for (const auto& t : r.trials) {
    double wsum = 0.0, best = 0.0;
    for (const auto& s : t.sources) {
      wsum += s.normalized_weight;
      best = std::max(best, s.solo_accuracy);
      EXPECT_NEAR(s.raw_weight, std::exp(-0.5 * s.wd_estimate * s.wd_estimate), 1e-12);
    }
    EXPECT_NEAR(wsum, 1.0, 1e-12);
    EXPECT_EQ(t.accuracy.at("single_best"), best);
  }
}

TEST_F(ReportFixture, Deterministic) {
  EXPECT_EQ(eval::run_experiment(*cfg), *report);
}

TEST_F(ReportFixture, JsonAndCsvExport) {
  testing::ScratchDir dir("report");
  eval::export_report(*report, dir.path());
  std::ifstream js(dir.path() / "report.json");
  const auto parsed = eval::report_from_json(nlohmann::json::parse(js));
  EXPECT_EQ(parsed, *report);

  std::ifstream csv(dir.path() / "summary.csv");
  std::vector<std::string> lines;
  for (std::string line; std::getline(csv, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), report->variants.size() + 1);
  EXPECT_EQ(lines[0], "variant,mean,std,trial0,trial1");
  for (std::size_t i = 0; i < report->variants.size(); ++i) {
    std::stringstream ss(lines[i + 1]);
    std::string cell;
    std::getline(ss, cell, ',');
    EXPECT_EQ(cell, report->variants[i]);
    const auto& agg = report->aggregate.at(cell);
    std::vector<double> expect{agg.mean, agg.std};
    expect.insert(expect.end(), agg.values.begin(), agg.values.end());
    for (double e : expect) {
      ASSERT_TRUE(std::getline(ss, cell, ','));
      EXPECT_LE(std::abs(std::stod(cell) - e), 1e-5 * std::max(std::abs(e), 1e-300)) << cell;
    }
  }
}

TEST(Experiment, AblationsShareStageArtifacts) {
  auto cfg = small_config();
  cfg.ablations.uniform = true;
  cfg.ablations.no_distill = true;
  eval::TrialArtifacts art;
  const auto tr = eval::run_trial(cfg, 0, &art);
  ASSERT_EQ(art.adapted.size(), 2u);
  ASSERT_EQ(art.distilled.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    // distilling only touches the classifier
    EXPECT_EQ(pipeline::checksum(art.distilled[i].extractor), pipeline::checksum(art.adapted[i].extractor));
    EXPECT_EQ(pipeline::checksum(*art.distilled[i].target_encoder), pipeline::checksum(*art.adapted[i].target_encoder));
    EXPECT_EQ(pipeline::checksum(*art.distilled[i].critic), pipeline::checksum(*art.adapted[i].critic));
  }
  // mdda and uniform read the same distilled bundles; only the weights differ
  const auto mdda = pipeline::aggregate_predict(art.distilled, art.weights, art.data.target_test.x);
  const auto uni = pipeline::baseline_uniform(art.distilled, art.data.target_test.x);
  EXPECT_EQ(art.predictions.at("mdda").probs, mdda.probs);
  EXPECT_EQ(art.predictions.at("uniform").probs, uni.probs);
  EXPECT_EQ(tr.accuracy.at("mdda"), eval::accuracy(mdda.labels, art.data.target_test.y));

  // turning distillation off leaves stages 1 and 2 untouched
  auto off = cfg;
  off.distill_enabled = false;
  off.ablations = {};
  const auto tr_off = eval::run_trial(off, 0);
  for (std::size_t i = 0; i < 2; ++i) {
    for (const char* key : {"extractor", "classifier_pretrained", "target_encoder", "critic"})
      EXPECT_EQ(tr_off.sources[i].checksums.at(key), tr.sources[i].checksums.at(key)) << key;
    EXPECT_EQ(tr_off.sources[i].wd_estimate, tr.sources[i].wd_estimate);
  }
  EXPECT_EQ(tr_off.accuracy.at("mdda"), tr.accuracy.at("no_distill"));
}

pt::ptree parse_svg(const std::string& svg) {
  std::istringstream is(svg);
  pt::ptree tree;
  pt::read_xml(is, tree);
  return tree;
}

std::size_t count_children(const pt::ptree& node, const std::string& name) {
  std::size_t n = 0;
  for (const auto& [k, v] : node) n += k == name;
  return n;
}

TEST(Scatter, EmptyInputGivesAxesAndLegend) {
  const std::vector<eval::ScatterSeries> none;
  const auto tree = parse_svg(eval::render_scatter(none));
  const auto& svg = tree.get_child("svg");
  bool axes = false, legend = false;
  for (const auto& [k, v] : svg)
    if (k == "g") {
      const auto id = v.get<std::string>("<xmlattr>.id", "");
      axes |= id == "axes";
      legend |= id == "legend";
    }
  EXPECT_TRUE(axes);
  EXPECT_TRUE(legend);
  const std::vector<eval::ScatterSeries> empty_series{{"d", Tensor(0, 2), {}}};
  EXPECT_NO_THROW(parse_svg(eval::render_scatter(empty_series)));
}

TEST(Scatter, OriginPointSitsAtPlotCenter) {
  const std::vector<eval::ScatterSeries> one{{"solo", Tensor::Zero(1, 2), {0}}};
  const auto tree = parse_svg(eval::render_scatter(one));
  double cx = -1, cy = -1, fx = 0, fy = 0, fw = 0, fh = 0;
  for (const auto& [k, v] : tree.get_child("svg")) {
    if (k != "g") continue;
    const auto id = v.get<std::string>("<xmlattr>.id", "");
    if (id == "axes") {
      const auto& frame = v.get_child("rect");
      fx = frame.get<double>("<xmlattr>.x");
      fy = frame.get<double>("<xmlattr>.y");
      fw = frame.get<double>("<xmlattr>.width");
      fh = frame.get<double>("<xmlattr>.height");
    } else if (v.get<std::string>("<xmlattr>.class", "") == "series") {
      cx = v.get<double>("circle.<xmlattr>.cx");
      cy = v.get<double>("circle.<xmlattr>.cy");
    }
  }
  EXPECT_NEAR(cx, fx + fw / 2, 0.01);
  EXPECT_NEAR(cy, fy + fh / 2, 0.01);
}

TEST(Scatter, MarkersPerDomainAndWellFormed) {
  Rng r(3);
  std::vector<eval::ScatterSeries> series;
  for (int d = 0; d < 5; ++d) {
    Tensor p(6, 2);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = r.normal();
    series.push_back({"dom<" + std::to_string(d) + ">&", p, {0, 1, 2, 0, 1, 2}});
  }
  testing::ScratchDir dir("svg");
  eval::export_scatter(series, dir.path() / "s.svg");
  std::ifstream is(dir.path() / "s.svg");
  pt::ptree tree;
  ASSERT_NO_THROW(pt::read_xml(is, tree));
  std::size_t groups = 0, markers = 0;
  for (const auto& [k, v] : tree.get_child("svg")) {
    if (k != "g" || v.get<std::string>("<xmlattr>.class", "") != "series") continue;
    ++groups;
    for (const char* shape : {"circle", "rect", "polygon", "path"}) markers += count_children(v, shape);
  }
  EXPECT_EQ(groups, 5u);
  EXPECT_EQ(markers, 30u);
}

TEST(Scatter, RejectsBadInput) {
  const std::vector<eval::ScatterSeries> three{{"x", Tensor::Zero(2, 3), {0, 0}}};
  EXPECT_THROW(eval::render_scatter(three), std::invalid_argument);
  const std::vector<eval::ScatterSeries> count{{"x", Tensor::Zero(2, 2), {0}}};
  EXPECT_THROW(eval::render_scatter(count), std::invalid_argument);
}

}  // namespace
}  // namespace mdda
