#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "error.hpp"
#include "rng.hpp"
#include "types.hpp"

namespace lf {

struct GeneratorShape {
  int latent_dim = 16;
  int layers = 4;
  int height = 32;
  int width = 32;

  int pixel_count() const { return height * width * Image::channels; }
};

struct GeneratorConfig {
  std::string backend = "toy";  // "toy" or "external"
  int latent_dim = 16;
  int layers = 4;
  int resolution = 32;
  double psi = 1.0;
  std::uint64_t seed = 1234;
  // External adapter commands; see backends.hpp.
  std::string map_command;
  std::string synth_command;

  void validate() const {
    require(backend == "toy" || backend == "external", "generator.backend must be toy or external");
    require(latent_dim > 0 && layers > 0 && resolution > 0,
            "generator dimensions must be positive");
    require(psi >= 0.0 && psi <= 1.0, "generator.psi must lie in [0, 1]");
    if (backend == "toy") {
      require(resolution % layers == 0, "toy generator needs resolution divisible by layers");
    }
  }

  GeneratorShape shape() const { return {latent_dim, layers, resolution, resolution}; }
};

/// Teacher generator: mapping network Z -> W plus per-layer synthesis W+ -> image.
///
/// Implementations are immutable after construction and safe for concurrent reads.
class Generator {
 public:
  virtual ~Generator() = default;

  virtual GeneratorShape shape() const = 0;
  virtual IntermediateCode map_latent(const LatentCode& z) const = 0;
  virtual Image synthesize(const ExtendedCode& code) const = 0;

  /// d(pixels)/d(row `layer`) at `code`, pixel_count x latent_dim.
  /// The default uses central finite differences on synthesize().
  virtual Eigen::MatrixXd layer_jacobian(const ExtendedCode& code, int layer) const {
    const auto s = shape();
    Eigen::MatrixXd jac(s.pixel_count(), s.latent_dim);
    constexpr double eps = 1e-4;
    for (int j = 0; j < s.latent_dim; ++j) {
      ExtendedCode plus = code, minus = code;
      plus.rows(layer, j) += eps;
      minus.rows(layer, j) -= eps;
      const Image a = synthesize(plus), b = synthesize(minus);
      for (int p = 0; p < s.pixel_count(); ++p) jac(p, j) = (a.pixels[p] - b.pixels[p]) / (2 * eps);
    }
    return jac;
  }

  Image synthesize(const IntermediateCode& w) const { return synthesize(broadcast(w, shape().layers)); }
};

inline constexpr std::uint64_t kLatentSalt = 0x5a;

/// Standard-normal latent keyed only by (master_seed, index).
inline LatentCode sample_z(std::uint64_t master_seed, std::uint64_t index, int dim) {
  Rng rng(master_seed, index, kLatentSalt);
  LatentCode z;
  z.values.resize(dim);
  for (int i = 0; i < dim; ++i) z.values[i] = rng.normal();
  z.provenance = SeedProvenance{master_seed, index};
  return z;
}

inline LatentCode sample_z(const Generator& gen, std::uint64_t master_seed, std::uint64_t index) {
  return sample_z(master_seed, index, gen.shape().latent_dim);
}

inline IntermediateCode mean_w(const Generator& gen, int n, std::uint64_t seed) {
  require(n >= 1, "mean_w: n must be at least 1");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(gen.shape().latent_dim);
  for (int i = 0; i < n; ++i) sum += gen.map_latent(sample_z(gen, seed, i)).values;
  if (n == 1) return IntermediateCode(sum);
  return IntermediateCode(sum / n);
}

/// Analytic toy backend.
///
/// Mapping is w = Q z + b with a seeded orthogonal Q. Synthesis splits the image into
/// `layers` horizontal bands; band l is clip(M_l * row_l + c_l) so row l only ever
/// touches band l.
class ToyGenerator final : public Generator {
 public:
  using Generator::synthesize;
  static constexpr double kPixelScale = 0.03;
  static constexpr double kOffsetScale = 0.5;

  explicit ToyGenerator(const GeneratorConfig& config = {})
      : shape_(config.shape()), seed_(config.seed) {
    config.validate();
    const int d = shape_.latent_dim;

    Rng q_rng(seed_, 0, 0x51);
    Eigen::MatrixXd gaussian(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) gaussian(i, j) = q_rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
    q_ = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
    // Fix column signs so Q does not depend on the QR sign convention.
    const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < d; ++j)
      if (r(j, j) < 0) q_.col(j) *= -1.0;

    Rng b_rng(seed_, 0, 0xb0);
    offset_.resize(d);
    for (int i = 0; i < d; ++i) offset_[i] = kOffsetScale * b_rng.normal();

    band_pixels_ = shape_.pixel_count() / shape_.layers;
    band_weights_.resize(shape_.layers);
    band_bias_.resize(shape_.layers);
    for (int l = 0; l < shape_.layers; ++l) {
      Rng m_rng(seed_, l, 0x3a);
      band_weights_[l].resize(static_cast<std::size_t>(band_pixels_) * d);
      for (auto& v : band_weights_[l]) v = kPixelScale * m_rng.normal();
      Rng c_rng(seed_, l, 0xc0);
      band_bias_[l].resize(band_pixels_);
      for (auto& v : band_bias_[l]) v = c_rng.uniform(0.3, 0.7);
    }
  }

  GeneratorShape shape() const override { return shape_; }

  IntermediateCode map_latent(const LatentCode& z) const override {
    require_shape(z.values.size() == shape_.latent_dim, "map_latent: latent dimension mismatch");
    return IntermediateCode(q_ * z.values + offset_);
  }

  Image synthesize(const ExtendedCode& code) const override {
    require_shape(code.layers() == shape_.layers && code.dim() == shape_.latent_dim,
                  "synthesize: code shape mismatch");
    Image image(shape_.height, shape_.width);
    for (int l = 0; l < shape_.layers; ++l) {
      const auto raw = band_raw(l, code, l);
      std::copy(raw.begin(), raw.end(), image.pixels.begin() + band_offset(l));
      for (int p = 0; p < band_pixels_; ++p) {
        double& v = image.pixels[band_offset(l) + p];
        v = std::clamp(v, 0.0, 1.0);
      }
    }
    return image;
  }

  Eigen::MatrixXd layer_jacobian(const ExtendedCode& code, int layer) const override {
    const int d = shape_.latent_dim;
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(shape_.pixel_count(), d);
    const auto raw = band_raw(layer, code, layer);
    for (int p = 0; p < band_pixels_; ++p) {
      if (raw[p] <= 0.0 || raw[p] >= 1.0) continue;
      for (int j = 0; j < d; ++j) jac(band_offset(layer) + p, j) = weight(layer, p, j);
    }
    return jac;
  }

  /// Pre-clip band values M_l * row + c_l for row `row` of `code`.
  std::vector<double> band_raw(int band, const ExtendedCode& code, int row) const {
    const int d = shape_.latent_dim;
    std::vector<double> out(band_pixels_);
    const auto& m = band_weights_[band];
    for (int p = 0; p < band_pixels_; ++p) {
      double acc = band_bias_[band][p];
      for (int j = 0; j < d; ++j) acc += m[static_cast<std::size_t>(p) * d + j] * code.rows(row, j);
      out[p] = acc;
    }
    return out;
  }

  /// Band matrix M_l as band_pixels x d.
  Eigen::MatrixXd band_matrix(int band) const {
    Eigen::MatrixXd m(band_pixels_, shape_.latent_dim);
    for (int p = 0; p < band_pixels_; ++p)
      for (int j = 0; j < shape_.latent_dim; ++j) m(p, j) = weight(band, p, j);
    return m;
  }
  Eigen::VectorXd band_bias(int band) const {
    return Eigen::Map<const Eigen::VectorXd>(band_bias_[band].data(), band_pixels_);
  }

  int band_pixels() const { return band_pixels_; }
  int band_rows() const { return shape_.height / shape_.layers; }
  std::size_t band_offset(int band) const { return static_cast<std::size_t>(band) * band_pixels_; }
  const Eigen::MatrixXd& mapping_matrix() const { return q_; }
  const Eigen::VectorXd& mapping_offset() const { return offset_; }

 private:
  double weight(int band, int p, int j) const {
    return band_weights_[band][static_cast<std::size_t>(p) * shape_.latent_dim + j];
  }

  GeneratorShape shape_;
  std::uint64_t seed_;
  Eigen::MatrixXd q_;
  Eigen::VectorXd offset_;
  int band_pixels_ = 0;
  std::vector<std::vector<double>> band_weights_;
  std::vector<std::vector<double>> band_bias_;
};

}  // namespace lf
