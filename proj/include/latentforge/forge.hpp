#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attributes.hpp"
#include "error.hpp"
#include "generator.hpp"
#include "hash.hpp"
#include "image_io.hpp"
#include "json_util.hpp"
#include "latent_ops.hpp"
#include "manifest.hpp"
#include "parallel.hpp"
#include "version.hpp"

namespace lf {

struct DirectionsConfig {
  std::string task = "gender";  // "gender" (binary) or "aging" (binned)
  std::size_t samples = 10000;
  std::uint64_t seed = 7;
  std::size_t min_class_count = 100;
  FilterThresholds thresholds;
  int workers = 1;
  double psi = 1.0;
  int mean_w_samples = 10000;
  Json snapshot = Json::object();

  Json to_json() const {
    return {{"task", task},
            {"samples", samples},
            {"seed", seed},
            {"min_class_count", min_class_count},
            {"min_detection", thresholds.min_detection},
            {"min_certainty", thresholds.min_certainty},
            {"psi", psi},
            {"mean_w_samples", mean_w_samples}};
  }
};

struct ForgeConfig {
  std::string task = "gender";  // gender | aging | mixing | morphing
  std::size_t samples = 1000;
  std::uint64_t seed = 11;
  int workers = 1;
  std::vector<double> scales = default_edit_scales();
  FilterThresholds base_thresholds;  // base image filter (aging)
  FilterThresholds edit_thresholds;  // edited images
  double acceptance_floor = 0.10;
  std::string mask = "coarse";
  int holdout_every = 10;  // index % holdout_every == holdout_every - 1 goes to holdout
  double psi = 1.0;
  int mean_w_samples = 10000;
  int age_step = 2;
  bool skip_clamped = true;
  std::filesystem::path out_dir = "forge";
  Json snapshot = Json::object();

  void validate() const {
    require(task == "gender" || task == "aging" || task == "mixing" || task == "morphing",
            "forge.task must be gender, aging, mixing or morphing");
    require(samples > 0, "forge.samples must be positive");
    require(!scales.empty(), "forge.scales must not be empty");
    require(acceptance_floor >= 0.0 && acceptance_floor <= 1.0, "forge.acceptance_floor must lie in [0, 1]");
    require(holdout_every >= 1, "forge.holdout_every must be at least 1");
    require(psi >= 0.0 && psi <= 1.0, "forge.psi must lie in [0, 1]");
    base_thresholds.validate();
    edit_thresholds.validate();
  }

  Json to_json() const {
    return {{"task", task},
            {"samples", samples},
            {"seed", seed},
            {"scales", scales},
            {"base_min_detection", base_thresholds.min_detection},
            {"base_min_certainty", base_thresholds.min_certainty},
            {"edit_min_detection", edit_thresholds.min_detection},
            {"edit_min_certainty", edit_thresholds.min_certainty},
            {"acceptance_floor", acceptance_floor},
            {"mask", mask},
            {"holdout_every", holdout_every},
            {"psi", psi},
            {"mean_w_samples", mean_w_samples},
            {"age_step", age_step},
            {"skip_clamped", skip_clamped}};
  }

  std::string split_of(std::uint64_t index) const {
    return static_cast<int>(index % holdout_every) == holdout_every - 1 ? "holdout" : "train";
  }
};

inline std::string bundle_hash(const DirectionBundle& bundle) { return sha256_hex(to_json(bundle).dump()); }

inline std::string sample_id(const std::string& task, std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06llu", static_cast<unsigned long long>(index));
  return task + "-" + buf;
}

namespace detail {

/// Draws w for (seed, index), applying truncation toward w_mean when psi < 1.
struct CodeSource {
  const Generator& gen;
  double psi;
  std::optional<IntermediateCode> w_mean;

  CodeSource(const Generator& g, double psi_, int mean_samples, std::uint64_t seed) : gen(g), psi(psi_) {
    if (psi < 1.0) w_mean = mean_w(gen, mean_samples, seed);
  }

  IntermediateCode operator()(std::uint64_t seed, std::uint64_t index) const {
    IntermediateCode w = gen.map_latent(sample_z(gen, seed, index));
    return w_mean ? truncate(w, psi, *w_mean) : w;
  }
};

/// Quantized to 8 bits so labels computed here equal labels recomputed from the PNG.
inline Image render(const Generator& gen, const IntermediateCode& w) { return quantized(gen.synthesize(w)); }

inline std::map<std::string, std::string> png_text(const Json& snapshot) {
  const std::string dump = snapshot.dump();
  return {{"Software", kToolVersion}, {"latentforge:config_sha256", sha256_hex(dump)}, {"latentforge:config", dump}};
}

inline std::string scale_key(double s) {
  Json j = s;
  return "s" + j.dump();
}

}  // namespace detail

/// Sample, classify, filter, then average per class and difference the centers.
inline DirectionBundle estimate_directions(const Generator& gen, const Classifier& classifier,
                                           const DirectionsConfig& cfg) {
  require(cfg.samples > 0, "directions.samples must be positive");
  cfg.thresholds.validate();
  const bool binary = cfg.task == "gender";
  require(binary || cfg.task == "aging", "directions.task must be gender or aging");
  const int classes = classifier.num_classes();
  require(!binary || classes == 2, "gender directions need a binary classifier");

  detail::CodeSource source(gen, cfg.psi, cfg.mean_w_samples, cfg.seed ^ 0x6d65616eULL);
  std::vector<IntermediateCode> codes(cfg.samples);
  std::vector<AttributeLabel> labels(cfg.samples);
  parallel_for(cfg.samples, cfg.workers, [&](std::size_t i) {
    codes[i] = source(cfg.seed, i);
    labels[i] = classifier.classify(detail::render(gen, codes[i]));
  });

  const auto mask = filter_samples(labels, cfg.thresholds);
  std::vector<IntermediateCode> kept;
  std::vector<int> kept_labels;
  std::map<int, std::size_t> counts;
  for (int k = 0; k < classes; ++k) counts[k] = 0;
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    if (!mask[i]) continue;
    kept.push_back(codes[i]);
    kept_labels.push_back(labels[i].class_id);
    ++counts[labels[i].class_id];
  }
  for (const auto& [k, n] : counts) {
    if (n == 0) throw Error("empty class " + std::to_string(k));
    if (n < cfg.min_class_count)
      throw Error("class " + std::to_string(k) + " has " + std::to_string(n) + " samples after filtering (minimum " +
                  std::to_string(cfg.min_class_count) + ")");
  }

  std::vector<int> expected;
  for (int k = 0; k < classes; ++k) expected.push_back(k);
  DirectionBundle bundle;
  bundle.task = cfg.task;
  bundle.centers = compute_class_centers(kept, kept_labels, expected);
  bundle.counts = counts;
  bundle.source_seed = cfg.seed;
  bundle.config = {{"directions", cfg.to_json()}, {"pipeline", cfg.snapshot}, {"tool_version", kToolVersion}};
  std::vector<std::pair<int, int>> pairs;
  if (binary) {
    pairs = {{0, 1}, {1, 0}};
  } else {
    for (int k = 0; k < classes; ++k)
      for (int step : {-2, 2})
        if (k + step >= 0 && k + step < classes) pairs.emplace_back(k, k + step);
  }
  add_transitions(bundle, pairs);
  return bundle;
}

struct ForgeResult {
  std::vector<DatasetManifest> manifests;
  std::vector<std::filesystem::path> manifest_paths;
};

namespace detail {

inline Json forge_snapshot(const ForgeConfig& cfg) {
  return {{"forge", cfg.to_json()}, {"pipeline", cfg.snapshot}, {"tool_version", kToolVersion}};
}

inline void check_floor(const DatasetManifest& m, double floor) {
  const double rate = m.counts.generated == 0 ? 0.0 : static_cast<double>(m.counts.accepted) / m.counts.generated;
  if (rate < floor) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "acceptance rate %.4f for %s/%s is below the floor %.4f; review filter thresholds",
                  rate, m.task.c_str(), m.view.c_str(), floor);
    throw Error(buf);
  }
}

inline ForgeResult finish(std::vector<DatasetManifest> manifests, const ForgeConfig& cfg) {
  ForgeResult result;
  for (auto& m : manifests) {
    m.recount();
    m.root = cfg.out_dir / cfg.task;
  }
  for (const auto& m : manifests) {
    const auto path = cfg.out_dir / cfg.task / ("manifest_" + m.view + ".jsonl");
    write_manifest(path, m);
    result.manifest_paths.push_back(path);
  }
  for (const auto& m : manifests) check_floor(m, cfg.acceptance_floor);
  result.manifests = std::move(manifests);
  return result;
}

inline SampleRecord base_record(const ForgeConfig& cfg, std::uint64_t index) {
  SampleRecord r;
  r.id = sample_id(cfg.task, index);
  r.seed = cfg.seed;
  r.index = index;
  r.task = cfg.task;
  r.split = cfg.split_of(index);
  return r;
}

inline std::string role_path(const SampleRecord& r, const std::string& role) {
  return r.split + "/" + r.id + "_" + role + ".png";
}

}  // namespace detail

/// Five-image edit sets along the class 0 -> 1 transition, pair selection, and the
/// two directional views (0to1, 1to0).
///
/// Pair selection: per class, the passing image with maximal certainty; ties go to
/// the smaller |scale|. Sets missing either class are rejected and kept in the
/// manifest with a reason.
inline ForgeResult forge_attribute_pairs(const Generator& gen, const Classifier& classifier,
                                         const DirectionBundle& bundle, const ForgeConfig& cfg) {
  cfg.validate();
  require(bundle.deltas.count({0, 1}) != 0, "forge: bundle lacks the class 0 -> 1 transition");
  const Eigen::VectorXd delta = bundle.deltas.at({0, 1});
  const std::string bhash = bundle_hash(bundle);
  const Json snapshot = detail::forge_snapshot(cfg);
  const auto text = detail::png_text(snapshot);
  const auto task_dir = cfg.out_dir / cfg.task;

  detail::CodeSource source(gen, cfg.psi, cfg.mean_w_samples, cfg.seed ^ 0x6d65616eULL);
  std::vector<SampleRecord> forward(cfg.samples), backward(cfg.samples);
  parallel_for(cfg.samples, cfg.workers, [&](std::size_t i) {
    SampleRecord rec = detail::base_record(cfg, i);
    const auto steps = edit_steps(source(cfg.seed, i), delta, cfg.scales);
    std::vector<Image> images;
    for (std::size_t s = 0; s < steps.size(); ++s) {
      images.push_back(detail::render(gen, steps[s]));
      rec.labels.push_back({detail::scale_key(cfg.scales[s]), cfg.scales[s], classifier.classify(images.back())});
    }
    std::optional<std::size_t> best[2];
    for (std::size_t s = 0; s < steps.size(); ++s) {
      const auto& label = rec.labels[s].label;
      if (!cfg.edit_thresholds.passes(label) || label.class_id < 0 || label.class_id > 1) continue;
      auto& slot = best[label.class_id];
      if (!slot || label.certainty > rec.labels[*slot].label.certainty ||
          (label.certainty == rec.labels[*slot].label.certainty &&
           std::abs(cfg.scales[s]) < std::abs(cfg.scales[*slot]))) {
        slot = s;
      }
    }
    SampleRecord rev = rec;
    if (!best[0] && !best[1]) {
      rec.rejection = "no image passed thresholds";
    } else if (!best[0]) {
      rec.rejection = "class 0 unrepresented";
    } else if (!best[1]) {
      rec.rejection = "class 1 unrepresented";
    }
    if (rec.accepted()) {
      const std::string p0 = detail::role_path(rec, "class0"), p1 = detail::role_path(rec, "class1");
      write_png(task_dir / p0, images[*best[0]], text);
      write_png(task_dir / p1, images[*best[1]], text);
      rec.roles = {{"source", p0}, {"target", p1}};
      rec.chosen_scales = {{"source", cfg.scales[*best[0]]}, {"target", cfg.scales[*best[1]]}};
      rev = rec;
      rev.roles = {{"source", p1}, {"target", p0}};
      rev.chosen_scales = {{"source", cfg.scales[*best[1]]}, {"target", cfg.scales[*best[0]]}};
    } else {
      rev.rejection = rec.rejection;
    }
    forward[i] = std::move(rec);
    backward[i] = std::move(rev);
  });

  std::vector<DatasetManifest> views(2);
  views[0].view = "0to1";
  views[0].records = std::move(forward);
  views[1].view = "1to0";
  views[1].records = std::move(backward);
  for (auto& v : views) {
    v.task = cfg.task;
    v.config = snapshot;
    v.bundle_hash = bhash;
  }
  return detail::finish(std::move(views), cfg);
}

/// Two-bin older/younger shifts using the per-bin transition of the base image's bin.
inline ForgeResult forge_aging_pairs(const Generator& gen, const Classifier& classifier, const DirectionBundle& bundle,
                                     const ForgeConfig& cfg) {
  cfg.validate();
  const int bins = classifier.num_classes();
  require(bins > 1, "forge aging: classifier must have at least two bins");
  bool any = false;
  for (const auto& [key, _] : bundle.deltas) any = any || std::abs(key.second - key.first) == cfg.age_step;
  require(any, "forge aging: bundle has no per-bin shift vectors");
  const std::string bhash = bundle_hash(bundle);
  const Json snapshot = detail::forge_snapshot(cfg);
  const auto text = detail::png_text(snapshot);
  const auto task_dir = cfg.out_dir / cfg.task;

  detail::CodeSource source(gen, cfg.psi, cfg.mean_w_samples, cfg.seed ^ 0x6d65616eULL);
  std::vector<SampleRecord> older(cfg.samples), younger(cfg.samples);
  parallel_for(cfg.samples, cfg.workers, [&](std::size_t i) {
    SampleRecord rec = detail::base_record(cfg, i);
    const IntermediateCode w = source(cfg.seed, i);
    const Image base = detail::render(gen, w);
    const AttributeLabel base_label = classifier.classify(base);
    rec.labels.push_back({"base", 0.0, base_label});
    bool base_written = false;

    auto make_view = [&](AgeDirection dir, const std::string& role) {
      SampleRecord r = rec;
      if (!cfg.base_thresholds.passes(base_label)) {
        r.rejection = "base filtered";
        return r;
      }
      const BinShift shift = age_shift_bins(base_label.class_id, dir, bins, cfg.age_step);
      if (shift.clamped && cfg.skip_clamped) {
        r.rejection = "bin clamp";
        return r;
      }
      const auto key = std::make_pair(base_label.class_id, shift.target);
      if (shift.target == base_label.class_id || bundle.deltas.count(key) == 0) {
        r.rejection = "no direction";
        return r;
      }
      const Image shifted = detail::render(gen, IntermediateCode(w.values + bundle.deltas.at(key)));
      const AttributeLabel label = classifier.classify(shifted);
      r.labels.push_back({role, 1.0, label});
      if (label.class_id != shift.target) {
        r.rejection = "target bin mismatch";
      } else if (!cfg.edit_thresholds.passes(label)) {
        r.rejection = "target filtered";
      } else {
        if (!base_written) {
          write_png(task_dir / detail::role_path(rec, "base"), base, text);
          base_written = true;
        }
        write_png(task_dir / detail::role_path(rec, role), shifted, text);
        r.roles = {{"source", detail::role_path(rec, "base")}, {"target", detail::role_path(rec, role)}};
        r.chosen_scales = {{"source", 0.0}, {"target", 1.0}};
      }
      return r;
    };
    older[i] = make_view(AgeDirection::Older, "older");
    younger[i] = make_view(AgeDirection::Younger, "younger");
  });

  std::vector<DatasetManifest> views(2);
  views[0].view = "older";
  views[0].records = std::move(older);
  views[1].view = "younger";
  views[1].records = std::move(younger);
  for (auto& v : views) {
    v.task = cfg.task;
    v.config = snapshot;
    v.bundle_hash = bhash;
  }
  return detail::finish(std::move(views), cfg);
}

namespace detail {

template <class Combine>
ForgeResult forge_triplets(const Generator& gen, const ForgeConfig& cfg, Combine combine) {
  cfg.validate();
  const Json snapshot = forge_snapshot(cfg);
  const auto text = png_text(snapshot);
  const auto task_dir = cfg.out_dir / cfg.task;
  detail::CodeSource source(gen, cfg.psi, cfg.mean_w_samples, cfg.seed ^ 0x6d65616eULL);
  std::vector<SampleRecord> records(cfg.samples);
  parallel_for(cfg.samples, cfg.workers, [&](std::size_t i) {
    SampleRecord rec = base_record(cfg, i);
    const IntermediateCode w1 = source(cfg.seed, 2 * i);
    const IntermediateCode w2 = source(cfg.seed, 2 * i + 1);
    const Image a = render(gen, w1), b = render(gen, w2);
    const Image target = quantized(gen.synthesize(combine(w1, w2)));
    for (const auto& [role, image] : {std::pair<std::string, const Image*>{"source_a", &a},
                                      {"source_b", &b},
                                      {"target", &target}}) {
      rec.roles[role] = role_path(rec, role);
      write_png(task_dir / rec.roles[role], *image, text);
    }
    records[i] = std::move(rec);
  });
  std::vector<DatasetManifest> views(1);
  views[0].task = cfg.task;
  views[0].view = "triplet";
  views[0].config = snapshot;
  views[0].records = std::move(records);
  return finish(std::move(views), cfg);
}

}  // namespace detail

/// Style mixing: target = synthesize(crossover(broadcast(w1), broadcast(w2), mask)).
inline ForgeResult forge_mixing_triplets(const Generator& gen, const ForgeConfig& cfg, const LayerMask& mask) {
  const int layers = gen.shape().layers;
  require_shape(static_cast<int>(mask.size()) == layers, "forge mixing: mask length differs from layer count");
  return detail::forge_triplets(gen, cfg, [&](const IntermediateCode& w1, const IntermediateCode& w2) {
    return crossover(broadcast(w1, layers), broadcast(w2, layers), mask);
  });
}

/// Morphing: target = synthesize(lerp(w1, w2, 0.5)).
inline ForgeResult forge_morphing_triplets(const Generator& gen, const ForgeConfig& cfg) {
  const int layers = gen.shape().layers;
  return detail::forge_triplets(gen, cfg, [&](const IntermediateCode& w1, const IntermediateCode& w2) {
    return broadcast(lerp(w1, w2, 0.5), layers);
  });
}

}  // namespace lf
