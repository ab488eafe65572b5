#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "attributes.hpp"
#include "backends.hpp"
#include "error.hpp"
#include "evaluation.hpp"
#include "forge.hpp"
#include "generator.hpp"
#include "image_io.hpp"
#include "json_util.hpp"
#include "projection.hpp"
#include "student.hpp"
#include "study.hpp"

namespace lf {

inline constexpr const char* kWorkspaceEnv = "LATENTFORGE_WORKSPACE";

struct ClassifierSpec {
  std::string backend = "toy";  // toy | external
  std::uint64_t seed = 1;
  int age_bins = 7;
  std::string gender_command;
  std::string aging_command;
};

struct StudySettings {
  std::size_t questions = 1000;
  std::uint64_t seed = 17;
  int answers_target = 10;
  std::string mode = "quality";
  int reservation_ttl_seconds = 600;
  double min_confidence = 0.95;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string results_token;
};

/// The merged pipeline configuration; the typed members are views of `tree`.
/// `snapshot` is what artifacts embed: the tree without the execution-only keys
/// (workspace location, worker count), which must not change any output bytes.
struct PipelineConfig {
  Json tree;
  Json snapshot;
  std::filesystem::path workspace;
  int workers = 1;
  GeneratorConfig generator;
  ClassifierSpec classifier;
  FilterThresholds thresholds;
  FilterThresholds edit_thresholds;
  DirectionsConfig directions;
  ForgeConfig forge;
  StudentConfig student;
  FidProtocol fid;
  StudySettings study;
  ProjectionOptions projection;

  DirectionsConfig directions_for(const std::string& task) const {
    DirectionsConfig c = directions;
    c.task = task;
    return c;
  }

  ForgeConfig forge_for(const std::string& task) const {
    ForgeConfig c = forge;
    c.task = task;
    c.out_dir = workspace / "forge";
    return c;
  }

  StudentConfig student_for(const std::string& task) const {
    StudentConfig c = student;
    c.in_channels = (task == "mixing" || task == "morphing") ? 6 : 3;
    return c;
  }
};

inline Json default_config_tree() {
  const GeneratorConfig g;
  const ClassifierSpec c;
  const FilterThresholds t;
  const DirectionsConfig d;
  const ForgeConfig f;
  Json student = StudentConfig{}.to_json();
  student.erase("in_channels");  // follows the task
  const FidProtocol fid;
  const StudySettings s;
  const ProjectionOptions p;
  return {
      {"workspace", "workspace"},
      {"workers", 1},
      {"generator",
       {{"backend", g.backend},
        {"latent_dim", g.latent_dim},
        {"layers", g.layers},
        {"resolution", g.resolution},
        {"psi", g.psi},
        {"seed", g.seed},
        {"map_command", g.map_command},
        {"synth_command", g.synth_command}}},
      {"classifier",
       {{"backend", c.backend},
        {"seed", c.seed},
        {"age_bins", c.age_bins},
        {"gender_command", c.gender_command},
        {"aging_command", c.aging_command}}},
      {"thresholds", {{"min_detection", t.min_detection}, {"min_certainty", t.min_certainty}}},
      {"directions",
       {{"samples", d.samples},
        {"seed", d.seed},
        {"min_class_count", d.min_class_count},
        {"mean_w_samples", d.mean_w_samples}}},
      {"forge",
       {{"samples", f.samples},
        {"seed", f.seed},
        {"scales", f.scales},
        {"acceptance_floor", f.acceptance_floor},
        {"mask", f.mask},
        {"holdout_every", f.holdout_every},
        {"age_step", f.age_step},
        {"skip_clamped", f.skip_clamped},
        {"edit_min_detection", nullptr},
        {"edit_min_certainty", nullptr}}},
      {"student", student},
      {"fid",
       {{"resolution", fid.resolution},
        {"real_split", fid.real_split},
        {"extractor",
         {{"id", fid.extractor.id},
          {"projection_dim", fid.extractor.projection_dim},
          {"seed", fid.extractor.seed},
          {"command", fid.extractor.command},
          {"external_dim", fid.extractor.external_dim}}}}},
      {"study",
       {{"questions", s.questions},
        {"seed", s.seed},
        {"answers_target", s.answers_target},
        {"mode", s.mode},
        {"reservation_ttl_seconds", s.reservation_ttl_seconds},
        {"min_confidence", s.min_confidence},
        {"host", s.host},
        {"port", s.port},
        {"results_token", s.results_token}}},
      {"projection",
       {{"mode", "w+"}, {"step_budget", p.step_budget}, {"restarts", p.restarts}, {"seed", p.seed}}},
  };
}

inline std::string kebab_to_snake(std::string s) {
  for (auto& ch : s)
    if (ch == '-') ch = '_';
  return s;
}

inline std::string snake_to_kebab(std::string s) {
  for (auto& ch : s)
    if (ch == '_') ch = '-';
  return s;
}

/// Dotted paths of every leaf in the default tree, e.g. "forge.samples".
inline std::vector<std::string> config_leaf_paths(const Json& tree = default_config_tree(), const std::string& prefix = "") {
  std::vector<std::string> out;
  for (const auto& [k, v] : tree.items()) {
    const std::string path = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      auto sub = config_leaf_paths(v, path);
      out.insert(out.end(), sub.begin(), sub.end());
    } else {
      out.push_back(path);
    }
  }
  return out;
}

namespace detail {

inline bool compatible(const Json& def, const Json& v) {
  if (v.is_null()) return def.is_null();
  if (def.is_null()) return v.is_number();  // optional numeric override
  if (def.is_number_integer() || def.is_number_unsigned()) {
    if (v.is_number_integer() || v.is_number_unsigned()) return true;
    return v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<long long>(v.get<double>()));
  }
  if (def.is_number_float()) return v.is_number();
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) return v.is_array() && std::all_of(v.begin(), v.end(), [](const Json& x) { return x.is_number(); });
  return false;
}

inline void merge_into(Json& base, const Json& overlay, const std::string& prefix) {
  require(overlay.is_object(), "config: '" + (prefix.empty() ? std::string("<root>") : prefix) + "' must be an object");
  for (const auto& [raw, v] : overlay.items()) {
    const std::string k = kebab_to_snake(raw);
    const std::string path = prefix.empty() ? k : prefix + "." + k;
    require(base.contains(k), "config: unknown key '" + path + "'");
    Json& slot = base[k];
    if (slot.is_object()) {
      merge_into(slot, v, path);
      continue;
    }
    require(compatible(slot, v), "config: wrong type for '" + path + "'");
    if ((slot.is_number_integer() || slot.is_number_unsigned()) && v.is_number_float())
      slot = static_cast<long long>(v.get<double>());
    else
      slot = v;
  }
}

}  // namespace detail

/// Merges `overlay` onto `base`; unknown keys and type mismatches raise. Keys may be
/// written in kebab-case.
inline void merge_config(Json& base, const Json& overlay) { detail::merge_into(base, overlay, ""); }

/// Turns "forge.samples" + "1000" into {"forge": {"samples": 1000}}. Values for
/// string keys are taken verbatim; others are parsed as JSON.
inline Json override_patch(const std::string& dotted, const std::string& value,
                           const Json& defaults = default_config_tree()) {
  std::string rest = kebab_to_snake(dotted);
  const Json* leaf = &defaults;
  for (std::size_t pos = 0; leaf && pos <= rest.size();) {
    const auto dot = rest.find('.', pos);
    const std::string key = rest.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    leaf = leaf->is_object() && leaf->contains(key) ? &(*leaf)[key] : nullptr;
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  require(leaf != nullptr && !leaf->is_object(), "config: unknown key '" + rest + "'");
  Json patch;
  if (leaf->is_string()) {
    patch = value;
  } else {
    try {
      patch = Json::parse(value);
    } catch (const Json::parse_error&) {
      throw Error("config: cannot parse value '" + value + "' for '" + rest + "'");
    }
  }
  while (!rest.empty()) {
    const auto dot = rest.rfind('.');
    const std::string key = dot == std::string::npos ? rest : rest.substr(dot + 1);
    patch = Json{{key, patch}};
    rest = dot == std::string::npos ? "" : rest.substr(0, dot);
  }
  return patch;
}

inline PipelineConfig config_from_tree(const Json& tree) {
  PipelineConfig c;
  c.tree = tree;
  c.snapshot = tree;
  c.snapshot.erase("workspace");
  c.snapshot.erase("workers");
  c.workspace = tree.at("workspace").get<std::string>();
  c.workers = tree.at("workers").get<int>();
  require(c.workers >= 1, "workers must be at least 1");

  const Json& g = tree.at("generator");
  c.generator.backend = g.at("backend");
  c.generator.latent_dim = g.at("latent_dim");
  c.generator.layers = g.at("layers");
  c.generator.resolution = g.at("resolution");
  c.generator.psi = g.at("psi");
  c.generator.seed = g.at("seed");
  c.generator.map_command = g.at("map_command");
  c.generator.synth_command = g.at("synth_command");
  c.generator.validate();

  const Json& k = tree.at("classifier");
  c.classifier.backend = k.at("backend");
  c.classifier.seed = k.at("seed");
  c.classifier.age_bins = k.at("age_bins");
  c.classifier.gender_command = k.at("gender_command");
  c.classifier.aging_command = k.at("aging_command");
  require(c.classifier.backend == "toy" || c.classifier.backend == "external",
          "classifier.backend must be toy or external");
  require(c.classifier.age_bins >= 2, "classifier.age_bins must be at least 2");
  require(c.classifier.backend != "toy" || c.generator.backend == "toy",
          "the toy classifier needs the toy generator");

  c.thresholds.min_detection = tree.at("thresholds").at("min_detection");
  c.thresholds.min_certainty = tree.at("thresholds").at("min_certainty");
  c.thresholds.validate();

  const Json& d = tree.at("directions");
  c.directions.samples = d.at("samples");
  c.directions.seed = d.at("seed");
  c.directions.min_class_count = d.at("min_class_count");
  c.directions.mean_w_samples = d.at("mean_w_samples");
  c.directions.thresholds = c.thresholds;
  c.directions.workers = c.workers;
  c.directions.psi = c.generator.psi;
  c.directions.snapshot = c.snapshot;
  require(c.directions.samples > 0, "directions.samples must be positive");

  const Json& f = tree.at("forge");
  c.edit_thresholds = c.thresholds;
  if (!f.at("edit_min_detection").is_null()) c.edit_thresholds.min_detection = f.at("edit_min_detection");
  if (!f.at("edit_min_certainty").is_null()) c.edit_thresholds.min_certainty = f.at("edit_min_certainty");
  c.forge.samples = f.at("samples");
  c.forge.seed = f.at("seed");
  c.forge.scales = f.at("scales").get<std::vector<double>>();
  c.forge.acceptance_floor = f.at("acceptance_floor");
  c.forge.mask = f.at("mask");
  c.forge.holdout_every = f.at("holdout_every");
  c.forge.age_step = f.at("age_step");
  c.forge.skip_clamped = f.at("skip_clamped");
  c.forge.base_thresholds = c.thresholds;
  c.forge.edit_thresholds = c.edit_thresholds;
  c.forge.workers = c.workers;
  c.forge.psi = c.generator.psi;
  c.forge.mean_w_samples = c.directions.mean_w_samples;
  c.forge.out_dir = c.workspace / "forge";
  c.forge.snapshot = c.snapshot;
  c.forge.validate();
  require(c.forge.age_step >= 1, "forge.age_step must be positive");
  layer_mask(c.forge.mask, c.generator.layers);

  Json student = tree.at("student");
  student["in_channels"] = 3;
  c.student = StudentConfig::from_json(student);
  require(c.student.resolution == c.generator.resolution, "student.resolution must equal generator.resolution");

  const Json& e = tree.at("fid");
  c.fid.resolution = e.at("resolution");
  c.fid.real_split = e.at("real_split");
  c.fid.workers = c.workers;
  c.fid.extractor.id = e.at("extractor").at("id");
  c.fid.extractor.projection_dim = e.at("extractor").at("projection_dim");
  c.fid.extractor.seed = e.at("extractor").at("seed");
  c.fid.extractor.command = e.at("extractor").at("command");
  c.fid.extractor.external_dim = e.at("extractor").at("external_dim");
  require(c.fid.resolution >= 0, "fid.resolution must be non-negative");
  require(c.fid.real_split == "all" || c.fid.real_split == "train", "fid.real_split must be all or train");
  require(c.fid.extractor.id == "flatten" || c.fid.extractor.id == "random-projection" || c.fid.extractor.id == "external",
          "fid.extractor.id must be flatten, random-projection or external");
  require(c.fid.extractor.id != "random-projection" || c.fid.extractor.projection_dim >= 1,
          "fid.extractor.projection_dim must be positive");
  require(c.fid.extractor.id != "external" || (!c.fid.extractor.command.empty() && c.fid.extractor.external_dim > 0),
          "external feature extractor needs command and external_dim");

  const Json& s = tree.at("study");
  c.study.questions = s.at("questions");
  c.study.seed = s.at("seed");
  c.study.answers_target = s.at("answers_target");
  c.study.mode = s.at("mode");
  c.study.reservation_ttl_seconds = s.at("reservation_ttl_seconds");
  c.study.min_confidence = s.at("min_confidence");
  c.study.host = s.at("host");
  c.study.port = s.at("port");
  c.study.results_token = s.at("results_token");
  parse_study_mode(c.study.mode);
  require(c.study.questions >= 1 && c.study.answers_target >= 1, "study.questions and answers_target must be positive");
  require(c.study.reservation_ttl_seconds >= 1, "study.reservation_ttl_seconds must be positive");
  require(c.study.min_confidence >= 0.5 && c.study.min_confidence <= 1.0, "study.min_confidence must lie in [0.5, 1]");
  require(c.study.port >= 0 && c.study.port < 65536, "study.port out of range");

  const Json& p = tree.at("projection");
  c.projection.mode = projection_mode_from_string(p.at("mode"));
  c.projection.step_budget = p.at("step_budget");
  c.projection.restarts = p.at("restarts");
  c.projection.seed = p.at("seed");
  require(c.projection.step_budget >= 1 && c.projection.restarts >= 1, "projection budgets must be positive");
  return c;
}

/// defaults < config file < workspace environment variable < overrides.
inline PipelineConfig load_pipeline_config(const std::optional<std::filesystem::path>& file,
                                           const std::vector<std::pair<std::string, std::string>>& overrides = {},
                                           bool use_env = true) {
  Json tree = default_config_tree();
  if (file) {
    Json user;
    try {
      user = Json::parse(read_file(*file));
    } catch (const Json::parse_error& e) {
      throw Error("config file " + file->string() + " is not valid JSON: " + e.what());
    }
    merge_config(tree, user);
  }
  if (use_env) {
    if (const char* ws = std::getenv(kWorkspaceEnv); ws && *ws) tree["workspace"] = ws;
  }
  for (const auto& [key, value] : overrides) merge_config(tree, override_patch(key, value));
  return config_from_tree(tree);
}

inline std::unique_ptr<Classifier> make_classifier(const PipelineConfig& cfg, const Generator& gen,
                                                   const std::string& task) {
  const bool aging = task == "aging";
  if (cfg.classifier.backend == "external") {
    const std::string& cmd = aging ? cfg.classifier.aging_command : cfg.classifier.gender_command;
    return std::make_unique<ExternalClassifier>(cmd, aging ? cfg.classifier.age_bins : 2);
  }
  const auto* toy = dynamic_cast<const ToyGenerator*>(&gen);
  require(toy != nullptr, "the toy classifier needs the toy generator");
  return std::make_unique<ToyClassifier>(*toy, aging ? ToyClassifier::Kind::Age : ToyClassifier::Kind::Binary,
                                         cfg.classifier.seed, cfg.classifier.age_bins);
}

}  // namespace lf
