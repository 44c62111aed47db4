/* Copyright 2026 The LSCL Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <cmath>
#include <filesystem>

#include "gtest/gtest.h"
#include "lscl/tta_eval.hpp"
#include "oracles.hpp"

namespace lscl {
namespace {

Model small_model(std::uint64_t seed) { return init_unet(UNetConfig{1, 4, 4, 2}, seed); }

Tensor random_image(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  return oracle::random_tensor(rng, {1, n, n}, 0.0, 1.0);
}

TEST(Rot90Test, FourTurnsIsIdentityAndNegativeUndoes) {
  const Tensor x = random_image(1, 6);
  EXPECT_EQ(rot90(rot90(rot90(rot90(x)))), x);
  EXPECT_EQ(rot90(rot90(x, 1), -1), x);
  EXPECT_EQ(rot90(x, 2), rot90(rot90(x)));
}

TEST(Rot90Test, CounterClockwise) {
  // 0 1 / 2 3 turned a quarter counter-clockwise is 1 3 / 0 2.
  const Tensor r = rot90(Tensor({2, 2}, {0, 1, 2, 3}));
  EXPECT_EQ(r.vec(), (std::vector<double>{1, 3, 0, 2}));
}

TEST(TtaTest, ProbabilitiesSumToOne) {
  const Model m = small_model(3);
  const Tensor p = tta_predict(m, random_image(2, 16));
  ASSERT_EQ(p.shape(), (Shape{4, 16, 16}));
  for (std::size_t i = 0; i < 256; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_GE(p[c * 256 + i], 0.0);
      s += p[c * 256 + i];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(TtaTest, MatchesExplicitAverage) {
  const Model m = small_model(4);
  const Tensor x = random_image(5, 16);
  Tensor want({4, 16, 16});
  for (int k = 0; k < 4; ++k) {
    const Tensor p = rot90(predict_probs(m, rot90(x, k)), 4 - k);
    for (std::size_t i = 0; i < want.size(); ++i) want[i] += p[i];
  }
  const Tensor got = tta_predict(m, x);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], 0.25 * want[i], 1e-15);
}

TEST(TtaTest, RotationEquivariant) {
  const Model m = small_model(6);
  const Tensor x = random_image(7, 16);
  for (int k = 1; k < 4; ++k) {
    const Tensor a = tta_predict(m, rot90(x, k));
    const Tensor b = rot90(tta_predict(m, x), k);
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(TtaTest, ConstantImageGivesRotationInvariantOutput) {
  const Model m = small_model(8);
  const Tensor p = tta_predict(m, Tensor({1, 16, 16}, 0.4));
  const Tensor r = rot90(p);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], r[i], 1e-12);
}

TEST(TtaTest, UniformModelUnchanged) {
  Model m = small_model(9);
  for (auto& [name, t] : m.params) t = Tensor(t.shape());
  const Tensor x = random_image(10, 8);
  const Tensor single = predict_probs(m, x), tta = tta_predict(m, x);
  EXPECT_EQ(single, tta);
  for (double v : tta.data()) EXPECT_EQ(v, 0.25);
}

TEST(TtaTest, NonSquareIsAnError) {
  EXPECT_THROW(tta_predict(small_model(1), Tensor({1, 8, 16})), ShapeError);
}

Datasets tiny_data() {
  DatasetSpec spec;
  spec.train_per_vendor = 0;
  spec.style_pool_size = 0;
  spec.test_per_vendor = 3;
  spec.seed = 12;
  return make_dataset(spec);
}

TEST(EvaluateTest, PerfectPredictorScoresPerfectly) {
  const Datasets d = tiny_data();
  const MetricTable t = evaluate_predictor([](const Sample& s) { return s.label; }, d.test, "oracle");
  EXPECT_EQ(t.vendors(), (std::vector<std::string>{"A", "B", "C", "D"}));
  for (const auto& v : t.vendors()) {
    EXPECT_EQ(t.mean("oracle", v, "DSC"), 1.0);
    EXPECT_EQ(t.mean("oracle", v, "JAC"), 1.0);
    EXPECT_EQ(t.mean("oracle", v, "HD"), 0.0);
    EXPECT_EQ(t.mean("oracle", v, "ASSD"), 0.0);
    for (const char* s : {"LV", "MYO", "RV"}) EXPECT_EQ(t.find("oracle", v, s, "DSC")->std, 0.0);
  }
  EXPECT_EQ(t.cells.size(), 4u * 4u * 4u);
}

TEST(EvaluateTest, AverageColumnIsMeanOfStructures) {
  const Datasets d = tiny_data();
  const Model m = small_model(13);
  const MetricTable t = evaluate(m, d.test, false, "m");
  const LabelMap pred = argmax_labels(predict_probs(m, d.test[1].samples[0].image));
  const ImageMetrics im = image_metrics(pred, d.test[1].samples[0].label);
  EXPECT_NEAR(im.values[0][0], oracle::dice(pred, d.test[1].samples[0].label, 1), 1e-15);
  for (const auto& v : t.vendors()) {
    for (const char* metric : {"DSC", "JAC", "HD", "ASSD"}) {
      const double avg = t.mean("m", v, metric);
      const double parts =
          (t.mean("m", v, metric, "LV") + t.mean("m", v, metric, "MYO") + t.mean("m", v, metric, "RV")) / 3.0;
      EXPECT_NEAR(avg, parts, 1e-12);
    }
  }
}

TEST(EvaluateTest, Deterministic) {
  const Datasets d = tiny_data();
  const Model m = small_model(14);
  const MetricTable a = evaluate(m, d.test, true, "m"), b = evaluate(m, d.test, true, "m");
  ASSERT_EQ(a.cells.size(), b.cells.size());
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    EXPECT_EQ(a.cells[i].mean, b.cells[i].mean);
    EXPECT_EQ(a.cells[i].std, b.cells[i].std);
  }
}

TEST(EvaluateTest, EmptyTestSetIsAnError) {
  EXPECT_THROW(evaluate(small_model(1), std::vector<Dataset>{}, false, "m"), InvalidArgument);
}

TEST(ReportTest, CompareAndWrite) {
  const Datasets d = tiny_data();
  const MetricTable a = evaluate_predictor([](const Sample& s) { return s.label; }, d.test, "oracle");
  const MetricTable b = evaluate(small_model(15), d.test, false, "random");
  EXPECT_THROW(compare_report({a}), InvalidArgument);
  const EvalReport rep = compare_report({a, b}, "abc");
  ASSERT_EQ(rep.scores.size(), 2u);
  EXPECT_EQ(rep.scores[0].method, "oracle");
  EXPECT_EQ(rep.scores[0].minmax, 1.0);
  EXPECT_EQ(rep.scores[1].minmax, 0.0);

  MetricTable partial = b;
  std::erase_if(partial.cells, [](const MetricCell& c) { return c.vendor == "D"; });
  EXPECT_THROW(compare_report({a, partial}), InvalidArgument);

  const auto dir = std::filesystem::temp_directory_path() / "lscl_report_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  write_report_csvs(rep, dir);
  const std::string first = read_text_file(dir / "summary.csv");
  write_report_csvs(rep, dir);
  EXPECT_EQ(read_text_file(dir / "summary.csv"), first);
  EXPECT_EQ(first.substr(0, first.find('\n')),
            "method,A_DSC,A_HD,B_DSC,B_HD,C_DSC,C_HD,D_DSC,D_HD,DSC_Score,HD_Score,MinMax_Score");
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace lscl
