#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "latentforge/forge.hpp"
#include "latentforge/student.hpp"
#include "test_support.hpp"

namespace {

using lf::nn::Tensor;

Tensor<double> random_tensor(int n, int c, int h, int w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Tensor<double> t(n, c, h, w);
  lf::Rng rng(seed, 0, 1);
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Picks `count` parameter coordinates spread over all tensors.
template <class P>
std::vector<std::pair<P*, std::size_t>> probe(const std::vector<P*>& params, int count, std::uint64_t seed) {
  std::vector<std::pair<P*, std::size_t>> out;
  lf::Rng rng(seed, 0, 2);
  for (int k = 0; k < count; ++k) {
    P* p = params[static_cast<std::size_t>(k) % params.size()];
    out.emplace_back(p, rng.below(p->value.size()));
  }
  return out;
}

template <class Loss, class P>
void expect_fd_match(const std::vector<std::pair<P*, std::size_t>>& coords, Loss loss) {
  const double eps = 1e-6;
  for (const auto& [p, i] : coords) {
    const double analytic = p->grad[i];
    const double saved = p->value[i];
    p->value[i] = saved + eps;
    const double up = loss();
    p->value[i] = saved - eps;
    const double down = loss();
    p->value[i] = saved;
    const double numeric = (up - down) / (2 * eps);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
    EXPECT_LT(std::abs(analytic - numeric) / scale, 1e-3) << p->name << "[" << i << "] analytic " << analytic
                                                           << " numeric " << numeric;
  }
}

TEST(StudentGradient, ReconstructionLossMatchesFiniteDifferences) {
  lf::StudentConfig cfg;
  cfg.in_channels = 3;
  lf::StudentNet<double> net(3, 8, 8, 4, 17);
  const auto x = random_tensor(2, 3, 8, 8, 1);
  const auto y = random_tensor(2, 3, 8, 8, 2);
  for (auto* p : net.parameters()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  lf::generator_objective<double>(net, nullptr, x, y, cfg, true);
  const auto coords = probe(net.parameters(), 10, 5);
  expect_fd_match(coords, [&] { return lf::generator_objective<double>(net, nullptr, x, y, cfg, false).total; });
}

TEST(StudentGradient, EveryParameterTensorChecked) {
  lf::StudentConfig cfg;
  lf::StudentNet<double> net(3, 8, 8, 4, 19);
  const auto x = random_tensor(1, 3, 8, 8, 14);
  const auto y = random_tensor(1, 3, 8, 8, 15);
  for (auto* p : net.parameters()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  lf::generator_objective<double>(net, nullptr, x, y, cfg, true);
  const auto params = net.parameters();
  expect_fd_match(probe(params, static_cast<int>(params.size()), 16),
                  [&] { return lf::generator_objective<double>(net, nullptr, x, y, cfg, false).total; });
}

TEST(StudentGradient, SixChannelReconstructionGradient) {
  lf::StudentConfig cfg;
  cfg.in_channels = 6;
  lf::StudentNet<double> net(6, 8, 8, 4, 21);
  const auto x = random_tensor(2, 6, 8, 8, 3);
  const auto y = random_tensor(2, 3, 8, 8, 4);
  for (auto* p : net.parameters()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  lf::generator_objective<double>(net, nullptr, x, y, cfg, true);
  expect_fd_match(probe(net.parameters(), 10, 6),
                  [&] { return lf::generator_objective<double>(net, nullptr, x, y, cfg, false).total; });
}

TEST(StudentGradient, AdversarialAndFeatureMatchingGradient) {
  lf::StudentConfig cfg;
  cfg.adversarial_weight = 0.7;
  cfg.feature_matching_weight = 2.0;
  lf::StudentNet<double> net(3, 16, 16, 4, 23);
  lf::MultiScaleDiscriminator<double> disc(6, 4, 2, 29);
  const auto x = random_tensor(2, 3, 16, 16, 7);
  const auto y = random_tensor(2, 3, 16, 16, 8);
  for (auto* p : net.parameters()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  for (auto* p : disc.parameters()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  const auto losses = lf::generator_objective<double>(net, &disc, x, y, cfg, true);
  EXPECT_GT(losses.adversarial, 0.0);
  EXPECT_GT(losses.feature_matching, 0.0);
  expect_fd_match(probe(net.parameters(), 10, 9),
                  [&] { return lf::generator_objective<double>(net, &disc, x, y, cfg, false).total; });
}

TEST(StudentGradient, DiscriminatorGradient) {
  lf::MultiScaleDiscriminator<double> disc(6, 4, 2, 31);
  const auto x = random_tensor(2, 3, 16, 16, 10);
  const auto y = random_tensor(2, 3, 16, 16, 11);
  const auto fake = random_tensor(2, 3, 16, 16, 12);
  for (auto* p : disc.parameters()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  lf::discriminator_objective<double>(disc, x, y, fake, true);
  expect_fd_match(probe(disc.parameters(), 10, 13),
                  [&] { return lf::discriminator_objective<double>(disc, x, y, fake, false); });
}

TEST(StudentLosses, L1AndLsganValues) {
  Tensor<double> a(1, 1, 1, 4), b(1, 1, 1, 4), g(1, 1, 1, 4);
  a.data = {0.0, 1.0, 0.5, 0.25};
  b.data = {1.0, 1.0, 0.0, 0.5};
  EXPECT_DOUBLE_EQ(lf::l1_loss(a, b, &g), (1.0 + 0.0 + 0.5 + 0.25) / 4);
  EXPECT_DOUBLE_EQ(g.data[0], -0.25);
  EXPECT_DOUBLE_EQ(g.data[2], 0.25);
  Tensor<double> gl;
  EXPECT_DOUBLE_EQ(lf::lsgan_loss(a, 1.0, &gl), 0.5 * (1.0 + 0.0 + 0.25 + 0.5625) / 4);
  EXPECT_DOUBLE_EQ(gl.data[0], -0.25);
}

TEST(StudentConfig, Validation) {
  lf::StudentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.in_channels = 4;
  EXPECT_THROW(cfg.validate(), lf::Error);
  cfg = {};
  cfg.adversarial_weight = -1;
  EXPECT_THROW(cfg.validate(), lf::Error);
  cfg = {};
  EXPECT_EQ(lf::StudentConfig::from_json(cfg.to_json()).to_json(), cfg.to_json());
}

class StudentTraining : public ::testing::Test {
 protected:
  lf::ToyGenerator gen{lf::GeneratorConfig{}};
  lf::testing::TempDir dir{"lf-student"};
};

TEST_F(StudentTraining, IdentityTaskHoldoutL1) {
  const auto m = lf::testing::make_pair_manifest(dir.path(), gen, 200, [](const lf::Image& s) { return s; });
  lf::StudentConfig cfg;
  const auto result = lf::train_student(m, cfg);
  EXPECT_EQ(result.report.epochs.size(), static_cast<std::size_t>(cfg.epochs));
  EXPECT_EQ(result.report.holdout.count, 20u);
  EXPECT_LE(result.report.holdout.l1, 0.02);
  EXPECT_EQ(result.checkpoint.manifest_hash, lf::manifest_hash(m));
}

TEST_F(StudentTraining, ConstantTargetHoldoutL1) {
  const auto m = lf::testing::make_pair_manifest(dir.path(), gen, 200,
                                                 [](const lf::Image& s) { return lf::Image(s.height, s.width, 0.3); });
  const auto result = lf::train_student(m, lf::StudentConfig{});
  EXPECT_LE(result.report.holdout.l1, 0.02);
}

TEST_F(StudentTraining, DeterministicAndCheckpointRoundTrip) {
  const auto m = lf::testing::make_pair_manifest(dir.path(), gen, 40, [](const lf::Image& s) {
    lf::Image t = s;
    for (auto& v : t.pixels) v = 1.0 - v;
    return t;
  });
  lf::StudentConfig cfg;
  cfg.epochs = 2;
  const auto a = lf::train_student(m, cfg);
  const auto b = lf::train_student(m, cfg);
  EXPECT_EQ(lf::encode_checkpoint(a.checkpoint), lf::encode_checkpoint(b.checkpoint));

  const auto path = dir.path() / "ck" / "student.lfck";
  lf::save_checkpoint(path, a.checkpoint);
  const auto loaded = lf::load_checkpoint(path);
  const lf::Image src = lf::read_png(m.resolve(m.records[0].roles.at("source")));
  const lf::Image before = lf::infer_student(a.checkpoint, std::vector<lf::Image>{src});
  const lf::Image after = lf::infer_student(loaded, std::vector<lf::Image>{src});
  EXPECT_EQ(before.pixels, after.pixels);
  EXPECT_EQ(lf::infer_student(loaded, std::vector<lf::Image>{src}).pixels, after.pixels);
  for (double v : after.pixels) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST_F(StudentTraining, AdversarialTrainingRunsAndReportsLosses) {
  const auto m = lf::testing::make_pair_manifest(dir.path(), gen, 20, [](const lf::Image& s) { return s; });
  lf::StudentConfig cfg;
  cfg.epochs = 2;
  cfg.adversarial_weight = 1.0;
  cfg.feature_matching_weight = 10.0;
  const auto result = lf::train_student(m, cfg);
  ASSERT_EQ(result.report.epochs.size(), 2u);
  EXPECT_GT(result.report.epochs[0].discriminator, 0.0);
  EXPECT_GT(result.report.epochs[0].feature_matching, 0.0);
  EXPECT_TRUE(std::isfinite(result.report.holdout.l1));
}

TEST_F(StudentTraining, MixingStudentDistinguishesInputOrder) {
  lf::ForgeConfig fc;
  fc.task = "mixing";
  fc.samples = 300;
  fc.out_dir = dir.path();
  const auto forged = lf::forge_mixing_triplets(gen, fc, lf::layer_mask("coarse", 4));
  lf::StudentConfig cfg;
  cfg.in_channels = 6;
  const auto result = lf::train_student(forged.manifests[0], cfg);
  const lf::Student student(result.checkpoint);
  const auto holdout = lf::load_examples(forged.manifests[0], 6, "holdout");
  ASSERT_FALSE(holdout.empty());
  double swap_gap = 0.0, fit = 0.0;
  for (const auto& ex : holdout) {
    const auto ab = student.infer(ex.inputs);
    const auto ba = student.infer(std::vector<lf::Image>{ex.inputs[1], ex.inputs[0]});
    swap_gap += lf::mean_abs_diff(ab, ba);
    fit += lf::mean_abs_diff(ab, ex.target);
  }
  swap_gap /= holdout.size();
  fit /= holdout.size();
  EXPECT_GT(swap_gap, 0.02);
  EXPECT_GT(swap_gap, 2 * fit);
}

TEST_F(StudentTraining, GenderReconLossSmoothedNonIncreasing) {
  const lf::ToyClassifier cls(gen, lf::ToyClassifier::Kind::Binary, 1);
  lf::DirectionsConfig dc;
  dc.samples = 4000;
  const auto bundle = lf::estimate_directions(gen, cls, dc);
  lf::ForgeConfig fc;
  fc.samples = 300;
  fc.out_dir = dir.path();
  const auto forged = lf::forge_attribute_pairs(gen, cls, bundle, fc);
  const auto result = lf::train_student(forged.manifests[0], lf::StudentConfig{});
  const auto& epochs = result.report.epochs;
  ASSERT_EQ(epochs.size(), 12u);
  const std::size_t window = 5;
  double prev = INFINITY;
  for (std::size_t e = 0; e + window <= epochs.size(); ++e) {
    double avg = 0.0;
    for (std::size_t k = e; k < e + window; ++k) avg += epochs[k].recon;
    avg /= window;
    EXPECT_LE(avg, prev) << "window starting at epoch " << e;
    prev = avg;
  }
}

TEST_F(StudentTraining, RoleChannelMismatchRejected) {
  const auto m = lf::testing::make_pair_manifest(dir.path(), gen, 20, [](const lf::Image& s) { return s; });
  lf::StudentConfig cfg;
  cfg.in_channels = 6;
  EXPECT_THROW(lf::train_student(m, cfg), lf::Error);
}

TEST(StudentInference, OutputRangeForExtremeInputs) {
  lf::StudentConfig cfg;
  lf::StudentNet<float> net(3, 32, 32, cfg.width, 1);
  auto ck = lf::make_checkpoint(net, cfg);
  for (auto& v : ck.parameters) v *= 40.0f;
  const lf::Student student(ck);
  for (double fill : {0.0, 1.0, 0.5}) {
    const auto out = student.infer(std::vector<lf::Image>{lf::Image(32, 32, fill)});
    for (double v : out.pixels) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(StudentInference, InputCountAndResolutionContract) {
  lf::StudentConfig cfg;
  cfg.in_channels = 6;
  lf::StudentNet<float> net(6, 32, 32, cfg.width, 1);
  const auto ck = lf::make_checkpoint(net, cfg);
  EXPECT_THROW(lf::infer_student(ck, std::vector<lf::Image>{lf::Image(32, 32)}), lf::ShapeError);
  EXPECT_THROW(lf::infer_student(ck, std::vector<lf::Image>{lf::Image(16, 16), lf::Image(16, 16)}), lf::ShapeError);
  EXPECT_NO_THROW(lf::infer_student(ck, std::vector<lf::Image>{lf::Image(32, 32), lf::Image(32, 32)}));
}

TEST(StudentCheckpoint, CorruptionDetected) {
  lf::StudentConfig cfg;
  lf::StudentNet<float> net(3, 32, 32, cfg.width, 1);
  const std::string bytes = lf::encode_checkpoint(lf::make_checkpoint(net, cfg));
  EXPECT_NO_THROW(lf::decode_checkpoint(bytes));
  EXPECT_THROW(lf::decode_checkpoint("XX" + bytes.substr(2)), lf::Error);
  EXPECT_THROW(lf::decode_checkpoint(bytes.substr(0, bytes.size() - 4)), lf::Error);
  std::string wrong_version = bytes;
  wrong_version[8] = 9;
  EXPECT_THROW(lf::decode_checkpoint(wrong_version), lf::Error);
}

}  // namespace
