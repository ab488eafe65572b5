#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "attributes.hpp"
#include "error.hpp"
#include "hash.hpp"
#include "json_util.hpp"
#include "version.hpp"

namespace lf {

struct LabeledImage {
  std::string key;  // role or edit-set slot, e.g. "s-0.5"
  double scale = 0.0;
  AttributeLabel label;
};

struct SampleRecord {
  std::string id;
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
  std::string task;
  std::string split;  // "train" or "holdout"
  std::map<std::string, std::string> roles;  // role -> path relative to the manifest directory
  std::vector<LabeledImage> labels;
  std::map<std::string, double> chosen_scales;
  std::string rejection;  // empty when accepted

  bool accepted() const { return rejection.empty(); }
};

struct ManifestCounts {
  std::size_t generated = 0;
  std::size_t filtered = 0;
  std::size_t accepted = 0;
};

/// One view of a forged dataset (e.g. class 0 -> class 1), persisted as JSON lines:
/// a header line with the config snapshot, then one line per sample in index order.
struct DatasetManifest {
  std::string task;
  std::string view;
  Json config = Json::object();
  std::string bundle_hash;
  std::vector<SampleRecord> records;
  ManifestCounts counts;
  std::filesystem::path root;  // directory role paths are relative to; not serialized

  void recount() {
    counts = {};
    counts.generated = records.size();
    for (const auto& r : records) (r.accepted() ? counts.accepted : counts.filtered)++;
  }

  std::vector<const SampleRecord*> accepted(const std::string& split = "") const {
    std::vector<const SampleRecord*> out;
    for (const auto& r : records)
      if (r.accepted() && (split.empty() || r.split == split)) out.push_back(&r);
    return out;
  }

  std::filesystem::path resolve(const std::string& relative) const { return root / relative; }
};

inline Json to_json(const SampleRecord& r) {
  Json labels = Json::array();
  for (const auto& l : r.labels) labels.push_back({{"key", l.key}, {"scale", l.scale}, {"label", to_json(l.label)}});
  return {{"type", "sample"}, {"id", r.id},        {"seed", r.seed},           {"index", r.index},
          {"task", r.task},   {"split", r.split},  {"roles", r.roles},         {"labels", labels},
          {"chosen_scales", r.chosen_scales},      {"rejection", r.rejection}};
}

inline SampleRecord record_from_json(const Json& j) {
  SampleRecord r;
  r.id = j.at("id").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.index = j.at("index").get<std::uint64_t>();
  r.task = j.at("task").get<std::string>();
  r.split = j.at("split").get<std::string>();
  r.roles = j.at("roles").get<std::map<std::string, std::string>>();
  for (const auto& l : j.at("labels"))
    r.labels.push_back({l.at("key").get<std::string>(), l.at("scale").get<double>(), label_from_json(l.at("label"))});
  r.chosen_scales = j.at("chosen_scales").get<std::map<std::string, double>>();
  r.rejection = j.at("rejection").get<std::string>();
  return r;
}

inline std::string serialize_manifest(const DatasetManifest& m) {
  const Json header = {{"type", "header"},
                       {"task", m.task},
                       {"view", m.view},
                       {"config", m.config},
                       {"bundle_hash", m.bundle_hash},
                       {"tool_version", kToolVersion},
                       {"counts", {{"generated", m.counts.generated},
                                   {"filtered", m.counts.filtered},
                                   {"accepted", m.counts.accepted}}}};
  std::string out = header.dump() + "\n";
  for (const auto& r : m.records) out += to_json(r).dump() + "\n";
  return out;
}

inline std::string manifest_hash(const DatasetManifest& m) { return sha256_hex(serialize_manifest(m)); }

inline DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& root = {}) {
  DatasetManifest m;
  m.root = root;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const Json j = Json::parse(line);
    if (!have_header) {
      require(j.value("type", "") == "header", "manifest: first line must be the header");
      m.task = j.at("task").get<std::string>();
      m.view = j.at("view").get<std::string>();
      m.config = j.at("config");
      m.bundle_hash = j.at("bundle_hash").get<std::string>();
      const auto& c = j.at("counts");
      m.counts = {c.at("generated").get<std::size_t>(), c.at("filtered").get<std::size_t>(),
                  c.at("accepted").get<std::size_t>()};
      have_header = true;
      continue;
    }
    m.records.push_back(record_from_json(j));
  }
  require(have_header, "manifest: missing header line");
  return m;
}

inline void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  write_file(path, serialize_manifest(m));
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.parent_path());
}

}  // namespace lf
