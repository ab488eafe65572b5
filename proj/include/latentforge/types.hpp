#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "error.hpp"

namespace lf {

/// Seed provenance of a sampled latent: (master seed, sample index).
struct SeedProvenance {
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
  bool operator==(const SeedProvenance&) const = default;
};

/// Point in the generator's input noise space Z.
struct LatentCode {
  Eigen::VectorXd values;
  std::optional<SeedProvenance> provenance;
};

/// Point in the intermediate space W.
struct IntermediateCode {
  Eigen::VectorXd values;

  IntermediateCode() = default;
  explicit IntermediateCode(Eigen::VectorXd v) : values(std::move(v)) {}

  Eigen::Index dim() const { return values.size(); }
  bool operator==(const IntermediateCode& other) const {
    return values.size() == other.values.size() && values == other.values;
  }
};

/// One intermediate code per layer group (the extended space W+), stored L x d.
struct ExtendedCode {
  Eigen::MatrixXd rows;

  ExtendedCode() = default;
  explicit ExtendedCode(Eigen::MatrixXd r) : rows(std::move(r)) {}

  Eigen::Index layers() const { return rows.rows(); }
  Eigen::Index dim() const { return rows.cols(); }
  IntermediateCode row(Eigen::Index l) const { return IntermediateCode(rows.row(l).transpose()); }
  bool operator==(const ExtendedCode& other) const {
    return rows.rows() == other.rows.rows() && rows.cols() == other.rows.cols() && rows == other.rows;
  }
};

inline ExtendedCode broadcast(const IntermediateCode& w, Eigen::Index layers) {
  Eigen::MatrixXd rows(layers, w.dim());
  for (Eigen::Index l = 0; l < layers; ++l) rows.row(l) = w.values.transpose();
  return ExtendedCode(std::move(rows));
}

/// RGB image, HWC layout, channel values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  static constexpr int channels = 3;

  std::size_t size() const { return pixels.size(); }
  std::size_t offset(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& at(int y, int x, int c) { return pixels[offset(y, x, c)]; }
  double at(int y, int x, int c) const { return pixels[offset(y, x, c)]; }

  bool same_shape(const Image& other) const {
    return height == other.height && width == other.width;
  }
  bool operator==(const Image& other) const {
    return same_shape(other) && pixels == other.pixels;
  }
};

inline std::uint8_t quantize_channel(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(clamped * 255.0 + 0.5));
}

/// Snap every channel to the nearest 8-bit level, matching what a PNG round trip yields.
inline Image quantized(const Image& image) {
  Image out = image;
  for (auto& v : out.pixels) v = quantize_channel(v) / 255.0;
  return out;
}

inline double mean_abs_diff(const Image& a, const Image& b) {
  require_shape(a.same_shape(b), "mean_abs_diff: image shapes differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a.pixels[i] - b.pixels[i]);
  return a.size() == 0 ? 0.0 : sum / static_cast<double>(a.size());
}

inline double psnr(const Image& a, const Image& b) {
  require_shape(a.same_shape(b), "psnr: image shapes differ");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    mse += d * d;
  }
  mse /= static_cast<double>(std::max<std::size_t>(1, a.size()));
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

/// Bilinear resize with half-pixel centers.
inline Image resize_bilinear(const Image& src, int height, int width) {
  if (src.height == height && src.width == width) return src;
  require_shape(src.height > 0 && src.width > 0 && height > 0 && width > 0,
                "resize_bilinear: empty image");
  Image out(height, width);
  const double sy = static_cast<double>(src.height) / height;
  const double sx = static_cast<double>(src.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double tx = fx - x0;
      for (int c = 0; c < Image::channels; ++c) {
        const double top = (1 - tx) * src.at(y0, x0, c) + tx * src.at(y0, x1, c);
        const double bottom = (1 - tx) * src.at(y1, x0, c) + tx * src.at(y1, x1, c);
        out.at(y, x, c) = (1 - ty) * top + ty * bottom;
      }
    }
  }
  return out;
}

}  // namespace lf
