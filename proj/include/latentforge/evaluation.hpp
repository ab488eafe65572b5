#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "backends.hpp"
#include "error.hpp"
#include "image_io.hpp"
#include "json_util.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "types.hpp"

namespace lf {

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string name() const = 0;
  /// Feature width for images with `pixels` scalar values.
  virtual int dim(std::size_t pixels) const = 0;
  virtual Eigen::VectorXd extract(const Image& image) const = 0;
};

/// Raw HWC pixel values.
class FlattenExtractor final : public FeatureExtractor {
 public:
  std::string name() const override { return "flatten"; }
  int dim(std::size_t pixels) const override { return static_cast<int>(pixels); }
  Eigen::VectorXd extract(const Image& image) const override {
    return Eigen::Map<const Eigen::VectorXd>(image.pixels.data(), static_cast<Eigen::Index>(image.pixels.size()));
  }
};

/// Fixed Gaussian projection P (k x pixels, entries N(0, 1/pixels)) drawn from `seed`.
class RandomProjectionExtractor final : public FeatureExtractor {
 public:
  RandomProjectionExtractor(int k, std::size_t pixels, std::uint64_t seed) : k_(k) {
    require(k >= 1, "random-projection: k must be positive");
    Rng rng(seed, 0, 0xfea7);
    proj_.resize(k, static_cast<Eigen::Index>(pixels));
    const double scale = 1.0 / std::sqrt(static_cast<double>(pixels));
    for (Eigen::Index r = 0; r < proj_.rows(); ++r)
      for (Eigen::Index c = 0; c < proj_.cols(); ++c) proj_(r, c) = rng.normal() * scale;
  }
  std::string name() const override { return "random-projection"; }
  int dim(std::size_t) const override { return k_; }
  Eigen::VectorXd extract(const Image& image) const override {
    require_shape(static_cast<Eigen::Index>(image.pixels.size()) == proj_.cols(),
                  "random-projection: image size differs from projection width");
    return proj_ * Eigen::Map<const Eigen::VectorXd>(image.pixels.data(), proj_.cols());
  }

 private:
  int k_;
  Eigen::MatrixXd proj_;
};

/// Out-of-process extractor (e.g. an Inception wrapper): PNG on stdin, {"features": [...]} on stdout.
class ExternalExtractor final : public FeatureExtractor {
 public:
  ExternalExtractor(std::string command, int k) : command_(std::move(command)), k_(k) {
    require(!command_.empty(), "external extractor: empty command");
    require(k >= 1, "external extractor: declared width must be positive");
  }
  std::string name() const override { return "external"; }
  int dim(std::size_t) const override { return k_; }
  Eigen::VectorXd extract(const Image& image) const override {
    const Json reply = Json::parse(run_process(command_, encode_png(image)));
    Eigen::VectorXd f = vector_from_json(reply.at("features"));
    require_shape(f.size() == k_, "external extractor returned " + std::to_string(f.size()) +
                                      " features, declared " + std::to_string(k_));
    return f;
  }

 private:
  std::string command_;
  int k_;
};

struct ExtractorSpec {
  std::string id = "random-projection";  // flatten | random-projection | external
  int projection_dim = 64;
  std::uint64_t seed = 13;
  std::string command;  // external only
  int external_dim = 0;

  Json to_json() const {
    return {{"id", id}, {"projection_dim", projection_dim}, {"seed", seed}, {"command", command},
            {"external_dim", external_dim}};
  }
};

inline std::unique_ptr<FeatureExtractor> make_extractor(const ExtractorSpec& spec, std::size_t pixels) {
  if (spec.id == "flatten") return std::make_unique<FlattenExtractor>();
  if (spec.id == "random-projection") return std::make_unique<RandomProjectionExtractor>(spec.projection_dim, pixels, spec.seed);
  if (spec.id == "external") return std::make_unique<ExternalExtractor>(spec.command, spec.external_dim);
  throw Error("unknown feature extractor '" + spec.id + "'");
}

/// n x k feature matrix; images are resized to `resolution` first when it is positive.
inline Eigen::MatrixXd extract_features(const std::vector<Image>& images, const FeatureExtractor& extractor,
                                        int resolution = 0, int workers = 1) {
  require(!images.empty(), "extract_features: no images");
  auto prepare = [&](const Image& img) {
    return resolution > 0 && (img.height != resolution || img.width != resolution)
               ? resize_bilinear(img, resolution, resolution)
               : img;
  };
  const std::size_t pixels = prepare(images[0]).pixels.size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()), extractor.dim(pixels));
  parallel_for(images.size(), workers, [&](std::size_t i) {
    const Image img = prepare(images[i]);
    require_shape(img.pixels.size() == pixels, "extract_features: images differ in size");
    const Eigen::VectorXd f = extractor.extract(img);
    require_shape(f.size() == out.cols(), "extract_features: feature width mismatch");
    out.row(static_cast<Eigen::Index>(i)) = f.transpose();
  });
  return out;
}

struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::size_t n = 0;
};

/// Sample mean and unbiased covariance, symmetrized.
inline FeatureStats fit_gaussian(const Eigen::MatrixXd& features) {
  require(features.rows() >= 2, "fit_gaussian: need at least two samples");
  FeatureStats s;
  s.n = static_cast<std::size_t>(features.rows());
  s.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
  s.cov = (centered.transpose() * centered) / static_cast<double>(features.rows() - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose());
  return s;
}

namespace detail {

inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  require(es.info() == Eigen::Success, "frechet_distance: eigendecomposition did not converge");
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}).
/// Tr (S_a S_b)^{1/2} is taken as the sum of square roots of the eigenvalues of the
/// symmetric matrix S_a^{1/2} S_b S_a^{1/2}, which has the same spectrum.
inline double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  require_shape(a.mean.size() == b.mean.size() && a.cov.rows() == b.cov.rows(),
                "frechet_distance: dimension mismatch");
  const Eigen::MatrixXd sa = detail::psd_sqrt(a.cov);
  const Eigen::MatrixXd inner = sa * b.cov * sa;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  require(es.info() == Eigen::Success, "frechet_distance: eigendecomposition did not converge");
  const Eigen::VectorXd ev = es.eigenvalues();
  const double top = ev.size() ? std::max(std::abs(ev.maxCoeff()), 1e-300) : 0.0;
  if (ev.size() && ev.minCoeff() < -1e-5 * top)
    throw Error("frechet_distance: matrix square root has a significant negative eigenvalue");
  const double trace_sqrt = ev.cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * trace_sqrt;
  return std::max(d, 0.0);
}

struct FidProtocol {
  int resolution = 256;
  ExtractorSpec extractor;
  std::string real_split = "all";  // which real images count as "real": all | train
  int workers = 1;

  Json to_json() const {
    return {{"resolution", resolution}, {"extractor", extractor.to_json()}, {"real_split", real_split},
            {"workers", workers}};
  }
};

struct FidResult {
  double fid = 0.0;
  std::size_t n_real = 0;
  std::size_t n_generated = 0;
  std::string extractor;
  int resolution = 0;
  std::string real_split;

  Json to_json() const {
    return {{"fid", fid},           {"n_real", n_real},         {"n_generated", n_generated},
            {"extractor", extractor}, {"resolution", resolution}, {"real_split", real_split}};
  }
};

inline FidResult eval_fid_protocol(const std::vector<Image>& real, const std::vector<Image>& generated,
                                   const FidProtocol& protocol) {
  require(!real.empty() && !generated.empty(), "eval_fid: image sets must be non-empty");
  require(protocol.resolution >= 0, "eval_fid: resolution must be non-negative");
  const Image probe = protocol.resolution > 0 ? resize_bilinear(real[0], protocol.resolution, protocol.resolution) : real[0];
  const auto extractor = make_extractor(protocol.extractor, probe.pixels.size());
  const auto fa = extract_features(real, *extractor, protocol.resolution, protocol.workers);
  const auto fb = extract_features(generated, *extractor, protocol.resolution, protocol.workers);
  FidResult r;
  r.fid = frechet_distance(fit_gaussian(fa), fit_gaussian(fb));
  r.n_real = real.size();
  r.n_generated = generated.size();
  r.extractor = extractor->name();
  r.resolution = protocol.resolution;
  r.real_split = protocol.real_split;
  return r;
}

}  // namespace lf
