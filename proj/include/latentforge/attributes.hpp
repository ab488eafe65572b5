#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "error.hpp"
#include "generator.hpp"
#include "json_util.hpp"
#include "rng.hpp"
#include "types.hpp"

namespace lf {

struct AttributeLabel {
  double detection_confidence = 1.0;
  int class_id = 0;  // bin index for age tasks
  double certainty = 0.5;
  double raw_score = 0.0;

  bool operator==(const AttributeLabel&) const = default;
};

struct FilterThresholds {
  double min_detection = 0.90;
  double min_certainty = 0.95;

  void validate() const {
    require(min_detection >= 0.0 && min_detection <= 1.0, "min_detection must lie in [0, 1]");
    require(min_certainty >= 0.0 && min_certainty <= 1.0, "min_certainty must lie in [0, 1]");
  }
  bool passes(const AttributeLabel& label) const {
    return label.detection_confidence >= min_detection && label.certainty >= min_certainty;
  }
};

inline Json to_json(const AttributeLabel& l) {
  return {{"detection_confidence", l.detection_confidence},
          {"class_id", l.class_id},
          {"certainty", l.certainty},
          {"raw_score", l.raw_score}};
}

inline AttributeLabel label_from_json(const Json& j) {
  AttributeLabel l;
  l.detection_confidence = j.at("detection_confidence").get<double>();
  l.class_id = j.at("class_id").get<int>();
  l.certainty = j.at("certainty").get<double>();
  l.raw_score = j.at("raw_score").get<double>();
  require(l.detection_confidence >= 0.0 && l.detection_confidence <= 1.0 && l.certainty >= 0.0 && l.certainty <= 1.0,
          "attribute label fields out of [0, 1]");
  return l;
}

/// Attribute classifier contract. Implementations must be pure functions of the image.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual AttributeLabel classify(const Image& image) const = 0;
  virtual int num_classes() const = 0;
};

inline std::vector<bool> filter_samples(const std::vector<AttributeLabel>& labels, const FilterThresholds& t) {
  std::vector<bool> mask(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) mask[i] = t.passes(labels[i]);
  return mask;
}

enum class AgeDirection { Older, Younger };

struct BinShift {
  int target = 0;
  bool clamped = false;
  bool operator==(const BinShift&) const = default;
};

inline BinShift age_shift_bins(int bin, AgeDirection direction, int bins = 7, int step = 2) {
  require(bin >= 0 && bin < bins, "age_shift_bins: bin out of range");
  const int raw = direction == AgeDirection::Older ? bin + step : bin - step;
  const int target = std::clamp(raw, 0, bins - 1);
  return {target, target != raw};
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Binary decision rule: class 1 iff score > 0 (a zero score is class 0).
inline AttributeLabel binary_label(double score, double temperature) {
  AttributeLabel label;
  label.raw_score = score;
  label.class_id = score > 0.0 ? 1 : 0;
  label.certainty = logistic(std::abs(score) / temperature);
  return label;
}

/// Deterministic linear oracle over pixels: score = <pixels, V> + beta.
///
/// Binary mode: class 1 iff score > 0, certainty = logistic(|score| / tau).
/// Age mode: the score range [-2.5 s, 2.5 s] is cut into `bins` equal-width bins
/// (outer bins open-ended); certainty is logistic(distance to nearest edge / tau).
/// s is the score standard deviation under the toy latent distribution, which
/// is what beta and tau are calibrated against.
class ToyClassifier final : public Classifier {
 public:
  enum class Kind { Binary, Age };

  static constexpr double kBinaryTemperature = 0.17;  // in units of score std
  static constexpr double kAgeHalfRange = 2.5;
  static constexpr double kAgeTemperatureFraction = 1.0 / 30.0;  // of one bin width

  ToyClassifier(const ToyGenerator& gen, Kind kind, std::uint64_t seed, int bins = 7)
      : kind_(kind), bins_(kind == Kind::Binary ? 2 : bins), height_(gen.shape().height), width_(gen.shape().width) {
    require(bins_ >= 1, "ToyClassifier: bins must be positive");
    const auto shape = gen.shape();
    weights_.resize(shape.pixel_count());
    Rng rng(seed, kind == Kind::Binary ? 1 : 2, 0xc1a5);
    for (auto& v : weights_) v = rng.normal() / std::sqrt(static_cast<double>(weights_.size()));

    // Latent axis of the pre-clip score under broadcast codes, and the score offset
    // at the mean code.
    Eigen::VectorXd axis = Eigen::VectorXd::Zero(shape.latent_dim);
    double offset = 0.0;
    for (int l = 0; l < shape.layers; ++l) {
      const Eigen::Map<const Eigen::VectorXd> v(weights_.data() + gen.band_offset(l), gen.band_pixels());
      axis += gen.band_matrix(l).transpose() * v;
      offset += v.dot(gen.band_bias(l));
    }
    score_std_ = axis.norm();
    bias_ = -(offset + axis.dot(gen.mapping_offset()));
    if (kind_ == Kind::Binary) {
      temperature_ = kBinaryTemperature * score_std_;
    } else {
      bin_width_ = 2.0 * kAgeHalfRange * score_std_ / bins_;
      temperature_ = kAgeTemperatureFraction * bin_width_;
    }
  }

  int num_classes() const override { return bins_; }

  double score(const Image& image) const {
    require_shape(image.height == height_ && image.width == width_, "classify: resolution mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < weights_.size(); ++i) acc += image.pixels[i] * weights_[i];
    return acc + bias_;
  }

  AttributeLabel classify(const Image& image) const override {
    if (kind_ == Kind::Binary) return binary_label(score(image), temperature_);
    AttributeLabel label;
    label.raw_score = score(image);
    const double lo = -kAgeHalfRange * score_std_;
    int bin = 0;
    double distance = std::numeric_limits<double>::infinity();
    for (int e = 1; e < bins_; ++e) {
      const double edge = lo + e * bin_width_;
      if (label.raw_score > edge) bin = e;
      distance = std::min(distance, std::abs(label.raw_score - edge));
    }
    label.class_id = bin;
    label.certainty = logistic(distance / temperature_);
    return label;
  }

  const std::vector<double>& pixel_weights() const { return weights_; }
  double bias() const { return bias_; }
  double score_std() const { return score_std_; }
  double temperature() const { return temperature_; }
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
  int bins_;
  int height_;
  int width_;
  std::vector<double> weights_;
  double bias_ = 0.0;
  double score_std_ = 1.0;
  double temperature_ = 1.0;
  double bin_width_ = 1.0;
};

}  // namespace lf
