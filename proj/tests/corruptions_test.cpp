#include "noiseopt/corruptions.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace noiseopt {
namespace {

Tensor gray(std::size_t n, std::size_t h = 28, std::size_t w = 28, double v = 0.5) { return Tensor({n, 1, h, w}, v); }

TEST(CorruptionTest, GaussianStdMatchesTable) {
  const Tensor x = gray(20);
  const CorruptionTables tab;
  for (int s = 1; s <= 5; ++s) {
    const Tensor y = corrupt(x, {CorruptionKind::gaussian, s, 3});
    double sq = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) sq += (y[i] - 0.5) * (y[i] - 0.5);
    const double sd = std::sqrt(sq / y.size());
    EXPECT_NEAR(sd / tab.gaussian_std[s - 1], 1.0, 0.05) << "severity " << s;
  }
}

TEST(CorruptionTest, GaussianScaleMultipliesStd) {
  CorruptionSpec spec{CorruptionKind::gaussian, 2, 3};
  spec.tables.gaussian_scale = 0.0;
  EXPECT_EQ(corrupt(gray(2), spec), gray(2));
}

TEST(CorruptionTest, ImpulseFraction) {
  const Tensor x = gray(50);
  const CorruptionTables tab;
  for (int s = 1; s <= 5; ++s) {
    const Tensor y = corrupt(x, {CorruptionKind::impulse, s, 9});
    std::size_t hit = 0, white = 0;
    for (double v : y.data()) {
      if (v != 0.5) {
        ++hit;
        ASSERT_TRUE(v == 0.0 || v == 1.0);
        if (v == 1.0) ++white;
      }
    }
    EXPECT_NEAR(static_cast<double>(hit) / y.size(), tab.impulse_fraction[s - 1], 0.01);
    EXPECT_NEAR(static_cast<double>(white) / std::max<std::size_t>(hit, 1), 0.5, 0.1);
  }
}

TEST(CorruptionTest, ContrastKeepsMeanAndScalesDeviation) {
  const Tensor flat = corrupt(gray(3, 4, 4, 0.3), {CorruptionKind::contrast, 5, 0});
  for (double v : flat.data()) EXPECT_NEAR(v, 0.3, 1e-15);
  Tensor x({1, 1, 1, 4}, std::vector<double>{0.2, 0.4, 0.6, 0.8});
  const Tensor y = corrupt(x, {CorruptionKind::contrast, 2, 0});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], 0.5 + (x[i] - 0.5) * 0.5, 1e-15);
  CorruptionSpec unit{CorruptionKind::contrast, 1, 0};
  unit.tables.contrast_factor[0] = 1.0;
  EXPECT_EQ(corrupt(x, unit), x);
}

TEST(CorruptionTest, GlassBlurDegenerateIsIdentity) {
  RngStream rng(1, 1);
  const Tensor x = sample_uniform(rng, {2, 1, 6, 6}, 0, 1);
  CorruptionSpec spec{CorruptionKind::glass_blur, 3, 0};
  spec.tables.blur_sigma[2] = 1e-3;
  spec.tables.glass_rounds[2] = 0;
  const Tensor y = corrupt(x, spec);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-12);
}

TEST(CorruptionTest, GlassBlurPreservesMultisetWithoutBlur) {
  RngStream rng(2, 2);
  const Tensor x = sample_uniform(rng, {1, 1, 8, 8}, 0, 1);
  CorruptionSpec spec{CorruptionKind::glass_blur, 5, 4};
  spec.tables.blur_sigma[4] = 1e-3;
  const Tensor y = corrupt(x, spec);
  std::vector<double> a = x.values(), b = y.values();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  EXPECT_NE(x, y);
}

TEST(CorruptionTest, DeterministicAndInRange) {
  RngStream rng(5, 5);
  const Tensor x = sample_uniform(rng, {3, 1, 10, 10}, 0, 1);
  for (CorruptionKind k : kAllCorruptions) {
    for (int s = 1; s <= 5; ++s) {
      const Tensor a = corrupt(x, {k, s, 11}), b = corrupt(x, {k, s, 11});
      EXPECT_EQ(a, b);
      for (double v : a.data()) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
      }
    }
  }
  EXPECT_NE(corrupt(x, {CorruptionKind::gaussian, 1, 1}), corrupt(x, {CorruptionKind::gaussian, 1, 2}));
}

TEST(CorruptionTest, SeverityAndShapeErrors) {
  EXPECT_THROW(corrupt(gray(1), {CorruptionKind::gaussian, 0, 0}), std::out_of_range);
  EXPECT_THROW(corrupt(gray(1), {CorruptionKind::gaussian, 6, 0}), std::out_of_range);
  EXPECT_THROW(corrupt(Tensor({2, 4}), {CorruptionKind::gaussian, 1, 0}), DimensionError);
  EXPECT_EQ(parse_corruption_kind("glass_blur"), CorruptionKind::glass_blur);
  EXPECT_THROW(parse_corruption_kind("fog"), std::invalid_argument);
}

// Network whose logits ignore the input: class 1 always wins.
NetworkState constant_classifier(std::size_t d, std::size_t classes, int winner) {
  Architecture arch{{1, 1, d}, {LayerSpec::dense(d, classes, Activation::identity)}};
  NetworkState net = init_network(arch, 0);
  net.layers[0].weights = Tensor(net.layers[0].weights.shape());
  net.layers[0].bias = Tensor(net.layers[0].bias.shape());
  net.layers[0].bias[static_cast<std::size_t>(winner)] = 1.0;
  return net;
}

Dataset labelled_gray(const Labels& labels, std::size_t d) {
  Dataset ds;
  ds.images = Tensor({labels.size(), 1, 1, d}, 0.5);
  ds.labels = labels;
  ds.class_count = 3;
  return ds;
}

TEST(CorruptionAccuracyTest, SeverityZeroIsClean) {
  const NetworkState net = constant_classifier(4, 3, 1);
  const Dataset ds = labelled_gray({1, 1, 0, 2, 1}, 4);
  EXPECT_EQ(severity_accuracy(net, ds, CorruptionKind::gaussian, 0, EvalNoise::disabled, 1), 0.6);
}

TEST(CorruptionAccuracyTest, ConstantClassifierScoresLabelFrequency) {
  const NetworkState net = constant_classifier(4, 3, 1);
  const Dataset ds = labelled_gray({1, 1, 0, 2, 1, 0, 1, 1}, 4);
  for (CorruptionKind k : kAllCorruptions) {
    const CorruptionAccuracy r = corruption_accuracy(net, ds, k, EvalNoise::disabled, 3);
    for (double a : r.per_severity) EXPECT_EQ(a, 5.0 / 8.0);
    EXPECT_DOUBLE_EQ(r.mean, 5.0 / 8.0);
  }
}

TEST(CorruptionAccuracyTest, MeanIsAverageOfSeverities) {
  Architecture arch{{1, 1, 4}, {LayerSpec::dense(4, 3, Activation::identity)}};
  const NetworkState net = init_network(arch, 4);
  RngStream rng(6, 6);
  Dataset ds;
  ds.images = sample_uniform(rng, {40, 1, 1, 4}, 0, 1);
  for (int i = 0; i < 40; ++i) ds.labels.push_back(i % 3);
  ds.class_count = 3;
  const CorruptionAccuracy r = corruption_accuracy(net, ds, CorruptionKind::impulse, EvalNoise::disabled, 2);
  double s = 0;
  for (int k = 0; k < 5; ++k) {
    EXPECT_EQ(r.per_severity[k], severity_accuracy(net, ds, CorruptionKind::impulse, k + 1, EvalNoise::disabled, 2));
    s += r.per_severity[k];
  }
  EXPECT_DOUBLE_EQ(r.mean, s / 5);
}

TEST(CorruptionAccuracyTest, EmptyDatasetThrows) {
  const NetworkState net = constant_classifier(4, 3, 1);
  Dataset empty;
  EXPECT_THROW(corruption_accuracy(net, empty, CorruptionKind::contrast, EvalNoise::disabled, 0),
               std::invalid_argument);
}

}  // namespace
}  // namespace noiseopt
