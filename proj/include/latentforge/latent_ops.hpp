#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "json_util.hpp"
#include "types.hpp"

namespace lf {

/// Class centers and the transition vectors between them for one editing task.
struct DirectionBundle {
  std::string task;
  std::map<int, IntermediateCode> centers;
  std::map<std::pair<int, int>, Eigen::VectorXd> deltas;
  std::map<int, std::size_t> counts;
  std::uint64_t source_seed = 0;
  Json config = Json::object();

  bool has_class(int id) const { return centers.count(id) != 0; }
  std::vector<int> class_ids() const {
    std::vector<int> ids;
    for (const auto& [id, _] : centers) ids.push_back(id);
    return ids;
  }
};

/// Arithmetic mean of the codes per class label.
inline std::map<int, IntermediateCode> compute_class_centers(const std::vector<IntermediateCode>& codes,
                                                             const std::vector<int>& labels,
                                                             const std::vector<int>& expected_classes = {}) {
  require(codes.size() == labels.size(), "compute_class_centers: codes and labels differ in length");
  std::map<int, Eigen::VectorXd> sums;
  std::map<int, std::size_t> counts;
  for (int k : expected_classes) counts[k] = 0;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    auto [it, inserted] = sums.try_emplace(labels[i], Eigen::VectorXd::Zero(codes[i].dim()));
    require_shape(it->second.size() == codes[i].dim(), "compute_class_centers: code dimensions differ");
    it->second += codes[i].values;
    ++counts[labels[i]];
  }
  std::map<int, IntermediateCode> centers;
  for (const auto& [k, n] : counts) {
    if (n == 0) throw Error("empty class " + std::to_string(k));
    centers.emplace(k, IntermediateCode(sums.at(k) / static_cast<double>(n)));
  }
  return centers;
}

/// Fill bundle.deltas with C_to - C_from for each requested (from, to) pair.
inline void add_transitions(DirectionBundle& bundle, const std::vector<std::pair<int, int>>& pairs) {
  for (const auto& [from, to] : pairs) {
    require(bundle.has_class(from) && bundle.has_class(to), "add_transitions: unknown class id");
    bundle.deltas[{from, to}] = bundle.centers.at(to).values - bundle.centers.at(from).values;
  }
}

inline Eigen::VectorXd transition_vector(const DirectionBundle& bundle, int from, int to) {
  if (!bundle.has_class(from)) throw Error("unknown class id " + std::to_string(from));
  if (!bundle.has_class(to)) throw Error("unknown class id " + std::to_string(to));
  return bundle.centers.at(to).values - bundle.centers.at(from).values;
}

inline const std::vector<double>& default_edit_scales() {
  static const std::vector<double> scales{-1.0, -0.5, 0.0, 0.5, 1.0};
  return scales;
}

/// w + s * delta for every scale, in order.
inline std::vector<IntermediateCode> edit_steps(const IntermediateCode& w, const Eigen::VectorXd& delta,
                                                const std::vector<double>& scales = default_edit_scales()) {
  require_shape(delta.size() == w.dim(), "edit_steps: delta dimension mismatch");
  std::vector<IntermediateCode> out;
  out.reserve(scales.size());
  for (double s : scales) out.emplace_back(w.values + s * delta);
  return out;
}

inline IntermediateCode lerp(const IntermediateCode& w1, const IntermediateCode& w2, double t) {
  require_shape(w1.dim() == w2.dim(), "lerp: dimension mismatch");
  if (t == 0.0) return w1;
  if (t == 1.0) return w2;
  return IntermediateCode((1.0 - t) * w1.values + t * w2.values);
}

/// Boolean per layer group; true takes the row from the first code.
using LayerMask = std::vector<bool>;

/// Named layer-group presets. The split scales the 18-layer grouping (4 coarse,
/// 4 middle, 10 fine) to any depth, which gives {0},{1},{2,3} for 4 layers.
inline LayerMask layer_mask(const std::string& name, int layers) {
  require(layers > 0, "layer_mask: layers must be positive");
  const int group = std::max(1, static_cast<int>(std::lround(layers * 4.0 / 18.0)));
  const int coarse_end = std::min(layers, group);
  const int middle_end = std::min(layers, 2 * group);
  LayerMask mask(layers, false);
  auto fill = [&](int begin, int end) {
    for (int l = begin; l < end; ++l) mask[l] = true;
  };
  if (name == "coarse") {
    fill(0, coarse_end);
  } else if (name == "middle") {
    fill(coarse_end, middle_end);
  } else if (name == "fine") {
    fill(middle_end, layers);
  } else if (name == "all") {
    fill(0, layers);
  } else if (name == "none") {
  } else if (static_cast<int>(name.size()) == layers &&
             name.find_first_not_of("01") == std::string::npos) {
    for (int l = 0; l < layers; ++l) mask[l] = name[l] == '1';
  } else {
    throw Error("unknown layer mask '" + name + "'");
  }
  return mask;
}

inline ExtendedCode crossover(const ExtendedCode& c1, const ExtendedCode& c2, const LayerMask& mask) {
  require_shape(c1.layers() == c2.layers() && c1.dim() == c2.dim(), "crossover: code shapes differ");
  require_shape(static_cast<Eigen::Index>(mask.size()) == c1.layers(), "crossover: mask length differs from layer count");
  ExtendedCode out = c2;
  for (Eigen::Index l = 0; l < c1.layers(); ++l)
    if (mask[l]) out.rows.row(l) = c1.rows.row(l);
  return out;
}

inline IntermediateCode truncate(const IntermediateCode& w, double psi, const IntermediateCode& w_mean) {
  require(psi >= 0.0 && psi <= 1.0, "truncate: psi must lie in [0, 1]");
  require_shape(w.dim() == w_mean.dim(), "truncate: dimension mismatch");
  if (psi == 1.0) return w;
  if (psi == 0.0) return w_mean;
  return IntermediateCode(w_mean.values + psi * (w.values - w_mean.values));
}

inline Json to_json(const DirectionBundle& b) {
  Json centers = Json::object();
  for (const auto& [k, c] : b.centers) centers[std::to_string(k)] = to_json_array(c.values);
  Json counts = Json::object();
  for (const auto& [k, n] : b.counts) counts[std::to_string(k)] = n;
  Json deltas = Json::array();
  for (const auto& [key, v] : b.deltas)
    deltas.push_back({{"from", key.first}, {"to", key.second}, {"vector", to_json_array(v)}});
  Json ids = Json::array();
  for (int id : b.class_ids()) ids.push_back(id);
  return {{"task", b.task},     {"class_ids", ids},          {"centers", centers},
          {"deltas", deltas},   {"counts", counts},          {"source_seed", b.source_seed},
          {"config", b.config}};
}

inline DirectionBundle bundle_from_json(const Json& j) {
  DirectionBundle b;
  b.task = j.at("task").get<std::string>();
  for (const auto& [k, v] : j.at("centers").items()) b.centers.emplace(std::stoi(k), IntermediateCode(vector_from_json(v)));
  for (const auto& [k, v] : j.at("counts").items()) b.counts[std::stoi(k)] = v.get<std::size_t>();
  for (const auto& d : j.at("deltas"))
    b.deltas[{d.at("from").get<int>(), d.at("to").get<int>()}] = vector_from_json(d.at("vector"));
  b.source_seed = j.at("source_seed").get<std::uint64_t>();
  if (j.contains("config")) b.config = j.at("config");
  return b;
}

}  // namespace lf
