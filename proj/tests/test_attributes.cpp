#include <gtest/gtest.h>

#include <cmath>

#include "latentforge/attributes.hpp"
#include "latentforge/generator.hpp"

namespace {

lf::AttributeLabel label(double det, int cls, double cert) { return {det, cls, cert, 0.0}; }

TEST(ToyClassifier, DeterministicAndBoundaryConvention) {
  lf::ToyGenerator gen{lf::GeneratorConfig{}};
  const lf::ToyClassifier cls(gen, lf::ToyClassifier::Kind::Binary, 1);
  const auto img = gen.synthesize(gen.map_latent(lf::sample_z(gen, 1, 0)));
  EXPECT_EQ(cls.classify(img), cls.classify(img));
  EXPECT_EQ(cls.classify(img).detection_confidence, 1.0);

  const auto zero = lf::binary_label(0.0, cls.temperature());
  EXPECT_EQ(zero.class_id, 0);
  EXPECT_EQ(zero.certainty, 0.5);
  EXPECT_EQ(lf::binary_label(1e-300, 1.0).class_id, 1);
  const auto l = cls.classify(img);
  EXPECT_EQ(l, lf::binary_label(cls.score(img), cls.temperature()));
  EXPECT_THROW(cls.classify(lf::Image(16, 16)), lf::ShapeError);
}

TEST(ToyClassifier, ScoreMatchesDotProductAndIsLinear) {
  lf::ToyGenerator gen{lf::GeneratorConfig{}};
  const lf::ToyClassifier cls(gen, lf::ToyClassifier::Kind::Binary, 1);
  const auto a = gen.synthesize(gen.map_latent(lf::sample_z(gen, 2, 0)));
  const auto b = gen.synthesize(gen.map_latent(lf::sample_z(gen, 2, 1)));
  double dot = cls.bias();
  for (std::size_t i = 0; i < a.pixels.size(); ++i) dot += a.pixels[i] * cls.pixel_weights()[i];
  EXPECT_NEAR(cls.score(a), dot, 1e-12);
  for (double t : {0.0, 0.3, 0.75, 1.0}) {
    lf::Image blend = a;
    for (std::size_t i = 0; i < blend.pixels.size(); ++i) blend.pixels[i] = t * a.pixels[i] + (1 - t) * b.pixels[i];
    EXPECT_NEAR(cls.score(blend), t * cls.score(a) + (1 - t) * cls.score(b), 1e-12);
  }
}

TEST(ToyClassifier, ScoreCenteredWithCalibratedSpread) {
  lf::ToyGenerator gen{lf::GeneratorConfig{}};
  const lf::ToyClassifier cls(gen, lf::ToyClassifier::Kind::Binary, 1);
  double sum = 0, sq = 0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    const double s = cls.score(gen.synthesize(gen.map_latent(lf::sample_z(gen, 3, i))));
    sum += s;
    sq += s * s;
  }
  const double mean = sum / n, sd = std::sqrt(sq / n - mean * mean);
  EXPECT_LT(std::abs(mean), 0.1 * cls.score_std());
  EXPECT_NEAR(sd / cls.score_std(), 1.0, 0.1);
}

TEST(ToyClassifier, AgeBinsCoverScoreRange) {
  lf::ToyGenerator gen{lf::GeneratorConfig{}};
  const lf::ToyClassifier age(gen, lf::ToyClassifier::Kind::Age, 1);
  EXPECT_EQ(age.num_classes(), 7);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 3000; ++i) {
    const auto l = age.classify(gen.synthesize(gen.map_latent(lf::sample_z(gen, 4, i))));
    ASSERT_GE(l.class_id, 0);
    ASSERT_LT(l.class_id, 7);
    EXPECT_GE(l.certainty, 0.5);
    EXPECT_LE(l.certainty, 1.0);
    counts[l.class_id]++;
  }
  for (int c : counts) EXPECT_GT(c, 0);
  // bins are ordered by score
  const double w = 5.0 * age.score_std() / 7;
  EXPECT_NEAR(age.temperature(), w / 30.0, 1e-12);
}

TEST(Filter, ThresholdExtremes) {
  const std::vector<lf::AttributeLabel> labels = {label(0.5, 0, 0.2), label(1.0, 1, 1.0), label(0.0, 0, 0.0)};
  for (bool b : lf::filter_samples(labels, {0.0, 0.0})) EXPECT_TRUE(b);
  for (bool b : lf::filter_samples(labels, {1.01, 0.0})) EXPECT_FALSE(b);
}

TEST(Filter, HandEvaluatedMask) {
  const std::vector<lf::AttributeLabel> labels = {
      label(0.95, 0, 0.96), label(0.89, 1, 0.99), label(0.90, 0, 0.95), label(0.99, 1, 0.94), label(1.0, 0, 1.0),
      label(0.91, 1, 0.951), label(0.2, 0, 0.2),  label(0.90, 1, 0.949), label(0.899, 0, 0.96), label(0.97, 1, 0.97)};
  const std::vector<bool> expected = {true, false, true, false, true, true, false, false, false, true};
  EXPECT_EQ(lf::filter_samples(labels, {}), expected);
}

TEST(Filter, MonotoneInThresholds) {
  lf::Rng rng(5, 0, 0);
  std::vector<lf::AttributeLabel> labels;
  for (int i = 0; i < 300; ++i) labels.push_back(label(rng.uniform(), 0, rng.uniform()));
  auto count = [&](double d, double c) {
    int n = 0;
    for (bool b : lf::filter_samples(labels, {d, c})) n += b;
    return n;
  };
  for (double d = 0; d < 1; d += 0.1)
    for (double c = 0; c < 1; c += 0.1) {
      EXPECT_LE(count(d + 0.05, c), count(d, c));
      EXPECT_LE(count(d, c + 0.05), count(d, c));
    }
}

TEST(Thresholds, DefaultsAndValidation) {
  lf::FilterThresholds t;
  EXPECT_EQ(t.min_detection, 0.90);
  EXPECT_EQ(t.min_certainty, 0.95);
  t.min_certainty = 1.2;
  EXPECT_THROW(t.validate(), lf::Error);
}

TEST(AgeShift, TwoBinShiftAndClamping) {
  EXPECT_EQ(lf::age_shift_bins(3, lf::AgeDirection::Older), (lf::BinShift{5, false}));
  EXPECT_EQ(lf::age_shift_bins(3, lf::AgeDirection::Younger), (lf::BinShift{1, false}));
  EXPECT_EQ(lf::age_shift_bins(6, lf::AgeDirection::Older, 7), (lf::BinShift{6, true}));
  EXPECT_EQ(lf::age_shift_bins(5, lf::AgeDirection::Older, 7), (lf::BinShift{6, true}));
  EXPECT_EQ(lf::age_shift_bins(0, lf::AgeDirection::Younger), (lf::BinShift{0, true}));
  EXPECT_THROW(lf::age_shift_bins(7, lf::AgeDirection::Older, 7), lf::Error);
}

TEST(Labels, JsonRoundTripAndRangeCheck) {
  const lf::AttributeLabel l{0.97, 1, 0.99, -3.25};
  EXPECT_EQ(lf::label_from_json(lf::to_json(l)), l);
  auto bad = lf::to_json(l);
  bad["certainty"] = 1.5;
  EXPECT_THROW(lf::label_from_json(bad), lf::Error);
}

}  // namespace
