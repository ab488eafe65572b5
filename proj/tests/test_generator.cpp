#include <gtest/gtest.h>

#include <latentforge/generator.hpp>
#include <latentforge/backends.hpp>

#include <cmath>

namespace {

using lf::ExtendedCode;
using lf::IntermediateCode;
using lf::ToyGenerator;

TEST(SampleZ, DeterministicPerSeedAndIndex) {
  const auto a = lf::sample_z(7, 0, 16);
  const auto b = lf::sample_z(7, 0, 16);
  const auto c = lf::sample_z(7, 1, 16);
  EXPECT_EQ(a.values, b.values);
  EXPECT_NE(a.values, c.values);
  ASSERT_TRUE(a.provenance.has_value());
  EXPECT_EQ(a.provenance->seed, 7u);
  EXPECT_EQ(c.provenance->index, 1u);
}

TEST(SampleZ, IndependentOfCallOrder) {
  const auto late = lf::sample_z(3, 500, 16);
  for (int i = 0; i < 10; ++i) lf::sample_z(3, i, 16);
  EXPECT_EQ(late.values, lf::sample_z(3, 500, 16).values);
}

TEST(SampleZ, MomentsOfTenThousandSamples) {
  constexpr int n = 10000, d = 16;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d), sq = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < n; ++i) {
    const auto z = lf::sample_z(7, i, d).values;
    mean += z;
    sq += z.cwiseProduct(z);
  }
  mean /= n;
  const Eigen::VectorXd var = sq / n - mean.cwiseProduct(mean);
  for (int j = 0; j < d; ++j) {
    EXPECT_NEAR(mean[j], 0.0, 0.05);
    EXPECT_NEAR(var[j], 1.0, 0.1);
  }
}

class ToyGeneratorTest : public ::testing::Test {
 protected:
  ToyGenerator gen{};
};

TEST_F(ToyGeneratorTest, MapAtOriginIsOffset) {
  lf::LatentCode z{Eigen::VectorXd::Zero(16), std::nullopt};
  EXPECT_EQ(gen.map_latent(z).values, gen.mapping_offset());
}

TEST_F(ToyGeneratorTest, MapIsAffine) {
  const auto z1 = lf::sample_z(1, 0, 16), z2 = lf::sample_z(1, 1, 16);
  lf::LatentCode sum{z1.values + z2.values, std::nullopt};
  const auto& b = gen.mapping_offset();
  const Eigen::VectorXd lhs = gen.map_latent(sum).values - b;
  const Eigen::VectorXd rhs = (gen.map_latent(z1).values - b) + (gen.map_latent(z2).values - b);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST_F(ToyGeneratorTest, MapIsIsometry) {
  const auto& b = gen.mapping_offset();
  for (int i = 0; i < 100; ++i) {
    const auto z = lf::sample_z(42, i, 16);
    EXPECT_NEAR((gen.map_latent(z).values - b).norm(), z.values.norm(), 1e-9);
  }
  for (int i = 0; i < 50; ++i) {
    const auto z1 = lf::sample_z(43, 2 * i, 16), z2 = lf::sample_z(43, 2 * i + 1, 16);
    EXPECT_NEAR((gen.map_latent(z1).values - gen.map_latent(z2).values).norm(), (z1.values - z2.values).norm(), 1e-9);
  }
}

TEST_F(ToyGeneratorTest, MapRejectsWrongDimension) {
  lf::LatentCode z{Eigen::VectorXd::Zero(5), std::nullopt};
  EXPECT_THROW(gen.map_latent(z), lf::ShapeError);
}

TEST_F(ToyGeneratorTest, SynthesizeRejectsWrongShape) {
  EXPECT_THROW(gen.synthesize(ExtendedCode(Eigen::MatrixXd::Zero(3, 16))), lf::ShapeError);
  EXPECT_THROW(gen.synthesize(ExtendedCode(Eigen::MatrixXd::Zero(4, 15))), lf::ShapeError);
}

TEST_F(ToyGeneratorTest, PerturbingRowZeroOnlyTouchesTopBand) {
  const auto w = gen.map_latent(lf::sample_z(5, 0, 16));
  const auto code = lf::broadcast(w, 4);
  auto perturbed = code;
  perturbed.rows.row(0).array() += 0.5;
  const auto a = gen.synthesize(code), b = gen.synthesize(perturbed);
  int changed_top = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c) {
        if (y >= 8) {
          ASSERT_EQ(a.at(y, x, c), b.at(y, x, c));
        } else if (a.at(y, x, c) != b.at(y, x, c)) {
          ++changed_top;
        }
      }
  EXPECT_GT(changed_top, 0);
}

TEST_F(ToyGeneratorTest, BandLocalityForEveryRow) {
  const auto base = lf::broadcast(gen.map_latent(lf::sample_z(9, 3, 16)), 4);
  for (int l = 0; l < 4; ++l) {
    auto p = base;
    p.rows.row(l) = gen.map_latent(lf::sample_z(9, 100 + l, 16)).values.transpose();
    const auto a = gen.synthesize(base), b = gen.synthesize(p);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        for (int c = 0; c < 3; ++c)
          if (y / 8 != l) ASSERT_EQ(a.at(y, x, c), b.at(y, x, c));
  }
}

TEST_F(ToyGeneratorTest, SynthesisIsDeterministic) {
  const auto code = lf::broadcast(gen.map_latent(lf::sample_z(5, 1, 16)), 4);
  EXPECT_EQ(gen.synthesize(code).pixels, gen.synthesize(code).pixels);
  EXPECT_EQ(ToyGenerator{}.synthesize(code).pixels, gen.synthesize(code).pixels);
}

TEST_F(ToyGeneratorTest, ImagesStayInUnitRangeForHugeCodes) {
  for (double scale : {1.0, 100.0, 1e6}) {
    const auto code = lf::broadcast(IntermediateCode(scale * lf::sample_z(2, 0, 16).values), 4);
    for (double v : gen.synthesize(code).pixels) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

// Oracle: central finite differences of the synthesized pixels along a coordinate
// direction, compared with the analytic column of the band matrix at unclipped pixels.
TEST_F(ToyGeneratorTest, FiniteDifferencesMatchBandMatrix) {
  const auto code = lf::broadcast(gen.map_latent(lf::sample_z(11, 0, 16)), 4);
  constexpr double eps = 1e-4;
  for (int l = 0; l < 4; ++l) {
    const Eigen::MatrixXd m = gen.band_matrix(l);
    for (int j = 0; j < 16; j += 5) {
      auto plus = code;
      plus.rows(l, j) += eps;
      const auto a = gen.synthesize(code), b = gen.synthesize(plus);
      const auto raw = gen.band_raw(l, code, l);
      const auto raw_plus = gen.band_raw(l, plus, l);
      int checked = 0;
      for (int p = 0; p < gen.band_pixels(); ++p) {
        if (raw[p] <= 0.0 || raw[p] >= 1.0 || raw_plus[p] <= 0.0 || raw_plus[p] >= 1.0) continue;
        const std::size_t k = gen.band_offset(l) + p;
        const double fd = (b.pixels[k] - a.pixels[k]) / eps;
        const double analytic = m(p, j);
        if (std::abs(analytic) < 1e-3) continue;
        EXPECT_LT(std::abs(fd - analytic) / std::abs(analytic), 1e-4);
        ++checked;
      }
      EXPECT_GT(checked, 100);
    }
  }
}

TEST_F(ToyGeneratorTest, LayerJacobianMatchesDefaultFiniteDifference) {
  const auto code = lf::broadcast(gen.map_latent(lf::sample_z(11, 1, 16)), 4);
  const Eigen::MatrixXd analytic = gen.layer_jacobian(code, 2);
  const Eigen::MatrixXd numeric = gen.lf::Generator::layer_jacobian(code, 2);
  EXPECT_LT((analytic - numeric).cwiseAbs().maxCoeff(), 1e-6);
}

TEST_F(ToyGeneratorTest, MeanWConvergesToOffset) {
  const auto w = lf::mean_w(gen, 10000, 3);
  for (int j = 0; j < 16; ++j) EXPECT_NEAR(w.values[j], gen.mapping_offset()[j], 0.05);
  EXPECT_EQ(lf::mean_w(gen, 10000, 3).values, w.values);
}

TEST_F(ToyGeneratorTest, MeanWOfOneSample) {
  EXPECT_EQ(lf::mean_w(gen, 1, 8).values, gen.map_latent(lf::sample_z(8, 0, 16)).values);
  EXPECT_THROW(lf::mean_w(gen, 0, 8), lf::Error);
}

TEST(GeneratorConfig, Validation) {
  lf::GeneratorConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.psi = 1.5;
  EXPECT_THROW(cfg.validate(), lf::Error);
  cfg.psi = 0.5;
  cfg.resolution = 30;
  EXPECT_THROW(cfg.validate(), lf::Error);
  cfg.resolution = 32;
  cfg.backend = "onnx";
  EXPECT_THROW(cfg.validate(), lf::Error);
}

TEST(GeneratorConfig, SeedChangesBackend) {
  lf::GeneratorConfig a, b;
  b.seed = a.seed + 1;
  const auto z = lf::sample_z(1, 0, 16);
  EXPECT_NE(ToyGenerator(a).map_latent(z).values, ToyGenerator(b).map_latent(z).values);
}

}  // namespace
