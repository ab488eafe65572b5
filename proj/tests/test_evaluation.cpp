#include <gtest/gtest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

#include "latentforge/evaluation.hpp"
#include "latentforge/generator.hpp"

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

lf::FeatureStats stats(VectorXd mean, MatrixXd cov) { return {std::move(mean), std::move(cov), 100}; }

MatrixXd random_spd(int d, lf::Rng& rng) {
  MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  return a * a.transpose() + 0.1 * MatrixXd::Identity(d, d);
}

VectorXd random_vec(int d, lf::Rng& rng) {
  VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = rng.normal();
  return v;
}

MatrixXd random_orthogonal(int d, lf::Rng& rng) {
  MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  return Eigen::HouseholderQR<MatrixXd>(a).householderQ();
}

// Independent route: general (Schur-based) matrix square root of the product.
double frechet_oracle(const lf::FeatureStats& a, const lf::FeatureStats& b) {
  const MatrixXd prod = a.cov * b.cov;
  const Eigen::MatrixXcd root = prod.cast<std::complex<double>>().sqrt();
  return (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * root.trace().real();
}

TEST(Frechet, SelfDistanceIsZero) {
  lf::Rng rng(1, 0, 0);
  const auto a = stats(random_vec(5, rng), random_spd(5, rng));
  EXPECT_NEAR(lf::frechet_distance(a, a), 0.0, 1e-9);
}

TEST(Frechet, IdentityCovarianceMeanShift) {
  const auto a = stats(VectorXd::Zero(2), MatrixXd::Identity(2, 2));
  const auto b = stats((VectorXd(2) << 3, 4).finished(), MatrixXd::Identity(2, 2));
  EXPECT_NEAR(lf::frechet_distance(a, b), 25.0, 1e-9);
}

TEST(Frechet, CommutingDiagonalClosedForm) {
  const auto a = stats(VectorXd::Zero(2), VectorXd::Map(std::vector<double>{1, 4}.data(), 2).asDiagonal());
  const auto b = stats(VectorXd::Zero(2), VectorXd::Map(std::vector<double>{9, 16}.data(), 2).asDiagonal());
  EXPECT_NEAR(lf::frechet_distance(a, b), 8.0, 1e-9);
}

TEST(Frechet, OneDimensionalClosedForm) {
  // (mu_a - mu_b)^2 + (sigma_a - sigma_b)^2
  const auto a = stats(VectorXd::Constant(1, 1.5), MatrixXd::Constant(1, 1, 4.0));
  const auto b = stats(VectorXd::Constant(1, -0.5), MatrixXd::Constant(1, 1, 0.25));
  EXPECT_NEAR(lf::frechet_distance(a, b), 4.0 + 2.25, 1e-12);
}

TEST(Frechet, MatchesGeneralMatrixSquareRoot) {
  lf::Rng rng(2, 0, 0);
  for (int t = 0; t < 20; ++t) {
    const auto a = stats(random_vec(6, rng), random_spd(6, rng));
    const auto b = stats(random_vec(6, rng), random_spd(6, rng));
    const double oracle = frechet_oracle(a, b);
    EXPECT_NEAR(lf::frechet_distance(a, b), oracle, 1e-8 * std::max(1.0, oracle));
  }
}

TEST(Frechet, SymmetryAndOrthogonalInvarianceOnRandomPairs) {
  lf::Rng rng(3, 0, 0);
  for (int t = 0; t < 100; ++t) {
    const int d = 2 + t % 7;
    const auto a = stats(random_vec(d, rng), random_spd(d, rng));
    const auto b = stats(random_vec(d, rng), random_spd(d, rng));
    const double ab = lf::frechet_distance(a, b);
    EXPECT_LT(std::abs(ab - lf::frechet_distance(b, a)), 1e-9);
    EXPECT_GE(ab, 0.0);
    const MatrixXd q = random_orthogonal(d, rng);
    const auto qa = stats(q * a.mean, q * a.cov * q.transpose());
    const auto qb = stats(q * b.mean, q * b.cov * q.transpose());
    EXPECT_LT(std::abs(ab - lf::frechet_distance(qa, qb)), 1e-6);
  }
}

TEST(Frechet, RankDeficientCovariancesAreClipped) {
  MatrixXd c = MatrixXd::Zero(3, 3);
  c(0, 0) = 1.0;
  const auto a = stats(VectorXd::Zero(3), c);
  const auto b = stats(VectorXd::Zero(3), MatrixXd::Zero(3, 3));
  EXPECT_NEAR(lf::frechet_distance(a, b), 1.0, 1e-12);
  EXPECT_NEAR(lf::frechet_distance(a, a), 0.0, 1e-12);
}

TEST(Frechet, DimensionMismatch) {
  const auto a = stats(VectorXd::Zero(2), MatrixXd::Identity(2, 2));
  const auto b = stats(VectorXd::Zero(3), MatrixXd::Identity(3, 3));
  EXPECT_THROW(lf::frechet_distance(a, b), lf::ShapeError);
}

TEST(FitGaussian, HandComputedPair) {
  MatrixXd x(2, 2);
  x << 0, 0, 2, 2;
  const auto s = lf::fit_gaussian(x);
  EXPECT_EQ(s.n, 2u);
  EXPECT_DOUBLE_EQ(s.mean(0), 1.0);
  EXPECT_DOUBLE_EQ(s.mean(1), 1.0);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_DOUBLE_EQ(s.cov(i, j), 2.0);
}

TEST(FitGaussian, ConstantRowsGiveZeroCovariance) {
  const MatrixXd x = MatrixXd::Constant(10, 3, 0.7);
  EXPECT_LT(lf::fit_gaussian(x).cov.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(FitGaussian, MatchesTwoPassLoops) {
  lf::Rng rng(4, 0, 0);
  MatrixXd x(500, 4);
  for (int i = 0; i < 500; ++i)
    for (int j = 0; j < 4; ++j) x(i, j) = rng.normal() * (j + 1) + j;
  const auto s = lf::fit_gaussian(x);
  double mean[4] = {0, 0, 0, 0};
  for (int i = 0; i < 500; ++i)
    for (int j = 0; j < 4; ++j) mean[j] += x(i, j) / 500.0;
  for (int j = 0; j < 4; ++j) {
    EXPECT_NEAR(s.mean(j), mean[j], 1e-9);
    for (int k = 0; k < 4; ++k) {
      double c = 0;
      for (int i = 0; i < 500; ++i) c += (x(i, j) - mean[j]) * (x(i, k) - mean[k]);
      EXPECT_NEAR(s.cov(j, k), c / 499.0, 1e-9);
      EXPECT_EQ(s.cov(j, k), s.cov(k, j));
    }
  }
}

TEST(FitGaussian, NeedsTwoRows) { EXPECT_THROW(lf::fit_gaussian(MatrixXd::Zero(1, 3)), lf::Error); }

TEST(Extractors, FlattenTwoByTwoGray) {
  lf::Image img(2, 2, 0.25);
  img.at(1, 1, 2) = 0.75;
  const auto f = lf::extract_features({img}, lf::FlattenExtractor{});
  ASSERT_EQ(f.cols(), 12);
  for (int k = 0; k < 11; ++k) EXPECT_EQ(f(0, k), 0.25);
  EXPECT_EQ(f(0, 11), 0.75);
}

TEST(Extractors, DeterministicAndResized) {
  lf::ToyGenerator gen{lf::GeneratorConfig{}};
  std::vector<lf::Image> imgs;
  for (int i = 0; i < 5; ++i) imgs.push_back(gen.synthesize(gen.map_latent(lf::sample_z(gen, 1, i))));
  lf::ExtractorSpec spec;
  const auto e1 = lf::make_extractor(spec, 16 * 16 * 3);
  const auto e2 = lf::make_extractor(spec, 16 * 16 * 3);
  const auto a = lf::extract_features(imgs, *e1, 16, 1);
  const auto b = lf::extract_features(imgs, *e2, 16, 3);
  EXPECT_EQ(a.cols(), spec.projection_dim);
  EXPECT_TRUE(a == b);
}

TEST(Extractors, UnknownIdRejected) {
  lf::ExtractorSpec spec;
  spec.id = "inception-v9";
  EXPECT_THROW(lf::make_extractor(spec, 12), lf::Error);
}

TEST(Extractors, ExternalAdapterSmoke) {
  lf::ExtractorSpec spec;
  spec.id = "external";
  spec.command = std::string("python3 ") + LF_TEST_SCRIPTS "/fake_extractor.py";
  spec.external_dim = 4;
  const auto ext = lf::make_extractor(spec, 0);
  lf::Image img(8, 8, 0.5);
  const auto f = lf::extract_features({img, img}, *ext);
  ASSERT_EQ(f.cols(), 4);
  EXPECT_NEAR(f(0, 0), 128.0 / 255.0, 1e-9);
  EXPECT_NEAR(f(0, 3), 0.0, 1e-12);
  spec.external_dim = 5;
  const auto wrong = lf::make_extractor(spec, 0);
  EXPECT_THROW(lf::extract_features({img}, *wrong), lf::ShapeError);
}

TEST(FidProtocol, SameSetIsZero) {
  lf::ToyGenerator gen{lf::GeneratorConfig{}};
  std::vector<lf::Image> imgs;
  for (int i = 0; i < 50; ++i) imgs.push_back(gen.synthesize(gen.map_latent(lf::sample_z(gen, 2, i))));
  lf::FidProtocol p;
  p.resolution = 16;
  const auto r = lf::eval_fid_protocol(imgs, imgs, p);
  EXPECT_NEAR(r.fid, 0.0, 1e-6);
  EXPECT_EQ(r.n_real, 50u);
  EXPECT_EQ(r.extractor, "random-projection");
}

TEST(FidProtocol, DisjointHalvesStableAcrossSeeds) {
  lf::ToyGenerator gen{lf::GeneratorConfig{}};
  lf::FidProtocol p;
  p.resolution = 16;
  p.extractor.id = "flatten";
  std::vector<double> fids;
  for (std::uint64_t seed : {21, 22, 23}) {
    std::vector<lf::Image> a, b;
    for (int i = 0; i < 4000; ++i)
      (i % 2 ? b : a).push_back(gen.synthesize(gen.map_latent(lf::sample_z(gen, seed, i))));
    fids.push_back(lf::eval_fid_protocol(a, b, p).fid);
  }
  const double mean = (fids[0] + fids[1] + fids[2]) / 3.0;
  EXPECT_GT(mean, 0.0);
  for (double f : fids) {
    EXPECT_GT(f, 0.0);
    EXPECT_LT(std::abs(f - mean), 0.2 * mean) << f << " vs mean " << mean;
  }
  // Much smaller than the distance to a shifted distribution.
  std::vector<lf::Image> a, shifted;
  for (int i = 0; i < 500; ++i) {
    a.push_back(gen.synthesize(gen.map_latent(lf::sample_z(gen, 31, i))));
    lf::Image s = a.back();
    for (auto& v : s.pixels) v = std::min(1.0, v + 0.1);
    shifted.push_back(s);
  }
  EXPECT_GT(lf::eval_fid_protocol(a, shifted, p).fid, 10 * mean);
}

TEST(FidProtocol, EmptySetRejected) {
  EXPECT_THROW(lf::eval_fid_protocol({}, {lf::Image(4, 4)}, lf::FidProtocol{}), lf::Error);
}

}  // namespace
