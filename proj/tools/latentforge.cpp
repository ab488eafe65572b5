// latentforge command-line entry point.
#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <pthread.h>
#include <string>
#include <thread>
#include <vector>

#include "latentforge/config.hpp"
#include "latentforge/evaluation.hpp"
#include "latentforge/forge.hpp"
#include "latentforge/student.hpp"
#include "latentforge/study.hpp"
#include "latentforge/study_server.hpp"
#include "latentforge/study_service.hpp"

namespace fs = std::filesystem;
using lf::Json;

namespace {

enum ExitCode { kOk = 0, kStageError = 1, kConfigError = 2, kShapeError = 3 };

struct StageFailure {
  std::string stage;
  int code;
  std::string type;
  std::string message;
};

const std::vector<std::string> kTasks = {"gender", "aging", "mixing", "morphing"};

std::string default_view(const std::string& task) {
  if (task == "gender") return "0to1";
  if (task == "aging") return "older";
  return "triplet";
}

std::vector<std::string> views_of(const std::string& task) {
  if (task == "gender") return {"0to1", "1to0"};
  if (task == "aging") return {"older", "younger"};
  return {"triplet"};
}

struct Paths {
  fs::path ws;
  fs::path bundle(const std::string& task) const { return ws / "directions" / (task + ".json"); }
  fs::path forge_dir(const std::string& task) const { return ws / "forge" / task; }
  fs::path manifest(const std::string& task, const std::string& view) const {
    return forge_dir(task) / ("manifest_" + view + ".jsonl");
  }
  fs::path student_dir(const std::string& task, const std::string& view) const {
    return ws / "students" / (task + "_" + view);
  }
  fs::path checkpoint(const std::string& task, const std::string& view) const {
    return student_dir(task, view) / "checkpoint.lfs";
  }
  fs::path infer_dir(const std::string& task, const std::string& view) const {
    return ws / "infer" / (task + "_" + view);
  }
  fs::path fid_dir() const { return ws / "fid"; }
  fs::path study_dir(const std::string& id) const { return ws / "studies" / id; }
};

Json artifact_header(const lf::PipelineConfig& cfg) {
  return {{"tool_version", lf::kToolVersion},
          {"config_sha256", lf::sha256_hex(cfg.snapshot.dump())},
          {"config", cfg.snapshot}};
}

void write_json(const fs::path& path, const Json& j) { lf::write_file(path, j.dump(1) + "\n"); }

void require_task(const std::string& task, bool needs_classifier) {
  if (std::find(kTasks.begin(), kTasks.end(), task) == kTasks.end())
    throw lf::Error("unknown task '" + task + "'; expected gender, aging, mixing or morphing");
  if (needs_classifier && task != "gender" && task != "aging")
    throw lf::Error("task '" + task + "' has no attribute directions; use gender or aging");
}

void require_view(const std::string& task, const std::string& view) {
  const auto v = views_of(task);
  if (std::find(v.begin(), v.end(), view) == v.end())
    throw lf::Error("task '" + task + "' has no view '" + view + "'");
}

lf::DatasetManifest read_forged(const Paths& p, const std::string& task, const std::string& view) {
  const auto path = p.manifest(task, view);
  if (!fs::exists(path))
    throw lf::Error("no forged dataset at " + path.string() + "; run `latentforge forge --task " + task + "` first");
  return lf::read_manifest(path);
}

// ---- commands --------------------------------------------------------------

Json cmd_directions(const lf::PipelineConfig& cfg, const std::string& task, bool dry) {
  require_task(task, true);
  const Paths p{cfg.workspace};
  Json out = {{"task", task}, {"bundle", p.bundle(task).string()}};
  if (dry) return out;
  const auto gen = lf::make_generator(cfg.generator);
  const auto cls = lf::make_classifier(cfg, *gen, task);
  const auto bundle = lf::estimate_directions(*gen, *cls, cfg.directions_for(task));
  const std::string text = lf::to_json(bundle).dump(1) + "\n";
  lf::write_file(p.bundle(task), text);
  Json counts = Json::object();
  for (const auto& [k, n] : bundle.counts) counts[std::to_string(k)] = n;
  out["class_counts"] = counts;
  out["transitions"] = bundle.deltas.size();
  out["bundle_sha256"] = lf::sha256_hex(text);
  return out;
}

Json cmd_forge(const lf::PipelineConfig& cfg, const std::string& task, bool dry) {
  require_task(task, false);
  const Paths p{cfg.workspace};
  const auto fc = cfg.forge_for(task);
  Json out = {{"task", task}, {"out_dir", p.forge_dir(task).string()}, {"samples", fc.samples}};
  if (task == "gender" || task == "aging") out["bundle"] = p.bundle(task).string();
  if (dry) return out;
  const auto gen = lf::make_generator(cfg.generator);
  lf::ForgeResult result;
  if (task == "gender" || task == "aging") {
    if (!fs::exists(p.bundle(task)))
      throw lf::Error("no direction bundle at " + p.bundle(task).string() + "; run `latentforge directions --task " +
                      task + "` first");
    const auto bundle = lf::bundle_from_json(Json::parse(lf::read_file(p.bundle(task))));
    lf::require(bundle.task == task, "direction bundle was estimated for task " + bundle.task);
    const auto cls = lf::make_classifier(cfg, *gen, task);
    result = task == "gender" ? lf::forge_attribute_pairs(*gen, *cls, bundle, fc) : lf::forge_aging_pairs(*gen, *cls, bundle, fc);
  } else if (task == "mixing") {
    result = lf::forge_mixing_triplets(*gen, fc, lf::layer_mask(fc.mask, cfg.generator.layers));
  } else {
    result = lf::forge_morphing_triplets(*gen, fc);
  }
  Json views = Json::array();
  for (std::size_t i = 0; i < result.manifests.size(); ++i) {
    const auto& m = result.manifests[i];
    views.push_back({{"view", m.view},
                     {"manifest", result.manifest_paths[i].string()},
                     {"manifest_sha256", lf::manifest_hash(m)},
                     {"generated", m.counts.generated},
                     {"accepted", m.counts.accepted},
                     {"filtered", m.counts.filtered}});
  }
  out["views"] = views;
  return out;
}

Json cmd_train(const lf::PipelineConfig& cfg, const std::string& task, std::string view, bool dry) {
  require_task(task, false);
  if (view.empty()) view = default_view(task);
  require_view(task, view);
  const Paths p{cfg.workspace};
  const auto sc = cfg.student_for(task);
  Json out = {{"task", task},
              {"view", view},
              {"manifest", p.manifest(task, view).string()},
              {"checkpoint", p.checkpoint(task, view).string()},
              {"student", sc.to_json()}};
  if (dry) return out;
  const auto manifest = read_forged(p, task, view);
  const auto result = lf::train_student(manifest, sc, cfg.snapshot);
  lf::save_checkpoint(p.checkpoint(task, view), result.checkpoint);
  Json report = result.report.to_json();
  report["manifest_sha256"] = result.checkpoint.manifest_hash;
  report["artifact"] = artifact_header(cfg);
  write_json(p.student_dir(task, view) / "report.json", report);
  out["report"] = (p.student_dir(task, view) / "report.json").string();
  out["train_pairs"] = result.report.train_pairs;
  out["final_recon"] = result.report.epochs.back().recon;
  out["holdout"] = report["holdout"];
  out["wall_clock_seconds"] = result.report.wall_clock_seconds;
  return out;
}

std::map<std::string, std::string> png_text_for(const lf::PipelineConfig& cfg, const std::string& checkpoint_sha) {
  const std::string dump = cfg.snapshot.dump();
  return {{"Software", lf::kToolVersion},
          {"latentforge:config_sha256", lf::sha256_hex(dump)},
          {"latentforge:config", dump},
          {"latentforge:checkpoint_sha256", checkpoint_sha}};
}

Json cmd_infer(const lf::PipelineConfig& cfg, const std::string& task, std::string view,
               const std::vector<std::string>& inputs, const std::string& output, const std::string& checkpoint_arg,
               bool dry) {
  require_task(task, false);
  if (view.empty()) view = default_view(task);
  require_view(task, view);
  const Paths p{cfg.workspace};
  const fs::path ck_path = checkpoint_arg.empty() ? p.checkpoint(task, view) : fs::path(checkpoint_arg);
  Json out = {{"task", task}, {"view", view}, {"checkpoint", ck_path.string()}};
  if (!inputs.empty() && output.empty()) throw lf::Error("infer: --input needs --output");
  out["output"] = inputs.empty() ? p.infer_dir(task, view).string() : output;
  if (dry) return out;
  if (!fs::exists(ck_path))
    throw lf::Error("no checkpoint at " + ck_path.string() + "; run `latentforge train --task " + task + "` first");
  const std::string ck_bytes = lf::read_file(ck_path);
  const lf::Student student(lf::decode_checkpoint(ck_bytes));
  const auto text = png_text_for(cfg, lf::sha256_hex(ck_bytes));

  if (!inputs.empty()) {
    std::vector<lf::Image> imgs;
    for (const auto& in : inputs) imgs.push_back(lf::read_png(in));
    lf::write_png(output, student.infer(imgs), text);
    out["images"] = 1;
    return out;
  }

  const auto manifest = read_forged(p, task, view);
  const auto roles = lf::input_roles(cfg.student_for(task).in_channels);
  const fs::path dir = p.infer_dir(task, view);
  fs::remove_all(dir);  // stale outputs would leak into eval-fid
  Json records = Json::array();
  double l1 = 0.0;
  std::size_t n = 0;
  for (const auto* rec : manifest.accepted()) {
    if (rec->split != "holdout") continue;
    std::vector<lf::Image> imgs;
    for (const auto& role : roles) imgs.push_back(lf::read_png(manifest.resolve(rec->roles.at(role))));
    const lf::Image pred = student.infer(imgs);
    const lf::Image target = lf::read_png(manifest.resolve(rec->roles.at("target")));
    const std::string name = rec->id + ".png";
    lf::write_png(dir / "student" / name, pred, text);
    // forged counterparts under the same file name, ready for `study build`
    for (const auto& role : roles) lf::write_file(dir / role / name, lf::read_file(manifest.resolve(rec->roles.at(role))));
    lf::write_file(dir / "target" / name, lf::read_file(manifest.resolve(rec->roles.at("target"))));
    const double err = lf::mean_abs_diff(lf::quantized(pred), target);
    l1 += err;
    ++n;
    records.push_back({{"id", rec->id}, {"output", "student/" + name}, {"target", rec->roles.at("target")}, {"l1", err}});
  }
  if (n == 0) throw lf::Error("infer: manifest has no accepted holdout records");
  Json index = {{"task", task},
                {"view", view},
                {"checkpoint_sha256", lf::sha256_hex(ck_bytes)},
                {"manifest_sha256", lf::manifest_hash(manifest)},
                {"records", records},
                {"mean_l1", l1 / n},
                {"artifact", artifact_header(cfg)}};
  write_json(dir / "infer.json", index);
  out["images"] = n;
  out["mean_l1"] = l1 / n;
  return out;
}

Json cmd_eval_fid(const lf::PipelineConfig& cfg, const std::string& a, const std::string& b, const std::string& task,
                  std::string view, bool dry) {
  const Paths p{cfg.workspace};
  Json out = {{"protocol", cfg.fid.to_json()}};
  const bool dirs = !a.empty() || !b.empty();
  if (dirs && (a.empty() || b.empty())) throw lf::Error("eval-fid: --a and --b go together");
  fs::path result_path;
  if (dirs) {
    out["a"] = a;
    out["b"] = b;
    result_path = p.fid_dir() / ("pair-" + lf::sha256_hex(fs::absolute(a).string() + "\n" + fs::absolute(b).string()).substr(0, 12) + ".json");
  } else {
    require_task(task, false);
    if (view.empty()) view = default_view(task);
    require_view(task, view);
    out["task"] = task;
    out["view"] = view;
    result_path = p.fid_dir() / (task + "_" + view + ".json");
  }
  out["result"] = result_path.string();
  if (dry) return out;

  std::vector<lf::Image> real, generated;
  if (dirs) {
    real = lf::read_png_dir(a);
    generated = lf::read_png_dir(b);
  } else {
    const auto manifest = read_forged(p, task, view);
    for (const auto* rec : manifest.accepted())
      if (cfg.fid.real_split == "all" || rec->split == cfg.fid.real_split)
        real.push_back(lf::read_png(manifest.resolve(rec->roles.at("target"))));
    const auto dir = p.infer_dir(task, view) / "student";
    if (!fs::exists(dir))
      throw lf::Error("no student outputs at " + dir.string() + "; run `latentforge infer --task " + task + "` first");
    generated = lf::read_png_dir(dir);
  }
  if (real.size() < 2 || generated.size() < 2) throw lf::Error("eval-fid: each set needs at least two images");
  const auto r = lf::eval_fid_protocol(real, generated, cfg.fid);
  Json doc = r.to_json();
  doc["artifact"] = artifact_header(cfg);
  if (dirs) {
    doc["a"] = a;
    doc["b"] = b;
  }
  write_json(result_path, doc);
  out["fid"] = r.fid;
  out["n_real"] = r.n_real;
  out["n_generated"] = r.n_generated;
  return out;
}

Json cmd_study_build(const lf::PipelineConfig& cfg, const std::string& id, const std::string& a, const std::string& b,
                     const std::string& sources, std::string method_a, std::string method_b, bool force, bool dry) {
  if (id.empty() || id.find('/') != std::string::npos || id == "." || id == "..")
    throw lf::Error("study build: --id must be a plain name");
  if (a.empty() || b.empty()) throw lf::Error("study build: --a and --b are required");
  const auto mode = lf::parse_study_mode(cfg.study.mode);
  if (mode == lf::StudyMode::Quality && sources.empty()) throw lf::Error("study build: quality mode needs --sources");
  const Paths p{cfg.workspace};
  const auto dir = p.study_dir(id);
  Json out = {{"id", id}, {"mode", cfg.study.mode}, {"dir", dir.string()}, {"questions", cfg.study.questions}};
  if (dry) return out;
  if (fs::exists(dir / "study.json") && !force)
    throw lf::Error("study " + id + " already exists at " + dir.string() + "; pass --force to replace it");

  // items are matched by file name across the directories
  std::vector<std::string> outs_a, outs_b, srcs;
  for (const auto& fa : lf::list_pngs(a)) {
    const auto fb = fs::path(b) / fa.filename();
    if (!fs::exists(fb)) continue;
    if (mode == lf::StudyMode::Quality) {
      const auto fsrc = fs::path(sources) / fa.filename();
      if (!fs::exists(fsrc)) continue;
      srcs.push_back(fsrc.string());
    }
    outs_a.push_back(fa.string());
    outs_b.push_back(fb.string());
  }
  if (outs_a.empty()) throw lf::Error("study build: no file names common to the input directories");
  if (method_a.empty()) method_a = fs::path(a).lexically_normal().filename().string();
  if (method_b.empty()) method_b = fs::path(b).lexically_normal().filename().string();

  if (force && fs::exists(dir)) fs::remove_all(dir);
  lf::StudyDefinition def;
  def.id = id;
  def.mode = mode;
  def.instruction = lf::default_instruction(mode);
  def.answers_target = cfg.study.answers_target;
  def.method_a = method_a;
  def.method_b = method_b;
  def.questions = lf::build_study(outs_a, outs_b, srcs, mode, cfg.study.questions, cfg.study.seed);
  def.config = artifact_header(cfg);
  lf::export_study(dir, def);
  out["items"] = outs_a.size();
  out["method_a"] = method_a;
  out["method_b"] = method_b;
  return out;
}

Json cmd_study_results(const lf::PipelineConfig& cfg, const std::string& id, bool dry) {
  const Paths p{cfg.workspace};
  const auto dir = p.study_dir(id);
  Json out = {{"id", id}, {"result", (dir / "results.json").string()}};
  if (dry) return out;
  if (!fs::exists(dir / "study.json")) throw lf::Error("no study at " + dir.string());
  const auto def = lf::load_study(dir);
  const auto log = dir / "answers.jsonl";
  const auto answers = fs::exists(log) ? lf::parse_answer_log(lf::read_file(log)) : std::vector<lf::StudyAnswer>{};
  const auto results = lf::aggregate_study(def.questions, answers, cfg.study.min_confidence);
  Json doc = results.to_json();
  doc["method_a"] = def.method_a;
  doc["method_b"] = def.method_b;
  doc["artifact"] = artifact_header(cfg);
  write_json(dir / "results.json", doc);
  out["answers"] = results.answers;
  out["winrate"] = results.winrate.to_json();
  out["method_a"] = def.method_a;
  out["method_b"] = def.method_b;
  return out;
}

int cmd_study_serve(const lf::PipelineConfig& cfg, std::vector<std::string> ids, bool dry) {
  const Paths p{cfg.workspace};
  if (ids.empty() && fs::exists(cfg.workspace / "studies"))
    for (const auto& e : fs::directory_iterator(cfg.workspace / "studies"))
      if (fs::exists(e.path() / "study.json")) ids.push_back(e.path().filename().string());
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw lf::Error("study serve: no studies in " + (cfg.workspace / "studies").string());
  std::vector<fs::path> dirs;
  for (const auto& id : ids) dirs.push_back(p.study_dir(id));
  Json out = {{"command", "study serve"}, {"status", "ok"}, {"studies", ids}, {"host", cfg.study.host}};
  if (dry) {
    out["dry_run"] = true;
    out["port"] = cfg.study.port;
    std::cout << out.dump() << std::endl;
    return kOk;
  }

  // Signals are handled on a dedicated thread so stop() never runs in a handler.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  lf::StudyServer server(dirs, cfg.study.results_token, std::chrono::seconds(cfg.study.reservation_ttl_seconds));
  const int port = server.bind(cfg.study.host, cfg.study.port);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });
  out["status"] = "serving";
  out["port"] = port;
  std::cout << out.dump() << std::endl;
  server.listen_after_bind();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  std::cout << Json{{"command", "study serve"}, {"status", "stopped"}}.dump() << std::endl;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latentforge: forge paired datasets from a latent generator, distill students, evaluate"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file, workspace;
  bool dry_run = false;
  std::vector<std::string> sets;
  app.add_option("-c,--config", config_file, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--workspace", workspace, "workspace root (overrides config and $" + std::string(lf::kWorkspaceEnv) + ")");
  app.add_flag("--dry-run", dry_run, "validate the configuration and print the plan without writing anything");
  app.add_option("--set", sets, "override a config key: section.key=value")->type_name("KEY=VALUE");
  app.set_version_flag("--version", lf::kToolVersion);

  // every config leaf is also a flag, e.g. --forge.samples or --student.learning-rate
  const Json defaults = lf::default_config_tree();
  std::map<std::string, std::string> leaf_values;
  for (const auto& path : lf::config_leaf_paths(defaults)) {
    if (path == "workspace") continue;
    app.add_option("--" + lf::snake_to_kebab(path), leaf_values[path])->group("Config keys");
  }

  std::string task = "gender", view, a, b, sources, id, method_a, method_b, output, checkpoint;
  std::vector<std::string> inputs, ids;
  std::optional<std::size_t> samples;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode, host;
  std::optional<int> port;
  bool force = false;

  auto* directions = app.add_subcommand("directions", "estimate class centers and transition vectors");
  directions->add_option("--task", task, "gender or aging")->capture_default_str();
  directions->add_option("--samples", samples, "alias for --directions.samples");
  directions->add_option("--seed", seed, "alias for --directions.seed");

  auto* forge = app.add_subcommand("forge", "forge a paired dataset");
  forge->add_option("--task", task, "gender, aging, mixing or morphing")->capture_default_str();
  forge->add_option("--samples", samples, "alias for --forge.samples");
  forge->add_option("--seed", seed, "alias for --forge.seed");

  auto* train = app.add_subcommand("train", "train a student on a forged dataset");
  train->add_option("--task", task)->capture_default_str();
  train->add_option("--view", view, "dataset view (default: the task's first view)");

  auto* infer = app.add_subcommand("infer", "run a trained student");
  infer->add_option("--task", task)->capture_default_str();
  infer->add_option("--view", view);
  infer->add_option("--input", inputs, "input PNG (repeat for two-image students); default: the holdout split");
  infer->add_option("--output", output, "output PNG for --input");
  infer->add_option("--checkpoint", checkpoint, "checkpoint file (default: the workspace student)");

  auto* fid = app.add_subcommand("eval-fid", "Frechet distance between two image sets");
  fid->add_option("--a", a, "directory of real images");
  fid->add_option("--b", b, "directory of generated images");
  fid->add_option("--task", task, "without --a/--b: compare forged targets with student outputs")->capture_default_str();
  fid->add_option("--view", view);

  auto* study = app.add_subcommand("study", "side-by-side preference studies");
  study->require_subcommand(1);
  auto* study_build = study->add_subcommand("build", "sample questions and export a study");
  study_build->add_option("--id", id, "study id")->required();
  study_build->add_option("--a", a, "outputs of method A")->required();
  study_build->add_option("--b", b, "outputs of method B")->required();
  study_build->add_option("--sources", sources, "source images (quality mode)");
  study_build->add_option("--method-a", method_a, "name of method A (default: directory name)");
  study_build->add_option("--method-b", method_b, "name of method B (default: directory name)");
  study_build->add_option("--mode", mode, "alias for --study.mode");
  study_build->add_option("--questions", samples, "alias for --study.questions");
  study_build->add_option("--seed", seed, "alias for --study.seed");
  study_build->add_flag("--force", force, "replace an existing study of the same id");
  auto* study_serve = study->add_subcommand("serve", "serve studies over HTTP until interrupted");
  study_serve->add_option("--id", ids, "study ids (default: every study in the workspace)");
  study_serve->add_option("--host", host, "alias for --study.host");
  study_serve->add_option("--port", port, "alias for --study.port (0 picks a free port)");
  auto* study_results = study->add_subcommand("results", "aggregate a study's answer log");
  study_results->add_option("--id", id, "study id")->required();

  std::string command = "latentforge";
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }
  for (auto* sub : app.get_subcommands()) {
    command = sub->get_name();
    for (auto* inner : sub->get_subcommands()) command += " " + inner->get_name();
  }

  auto fail = [&](const StageFailure& f) {
    std::cerr << Json{{"status", "error"}, {"command", command}, {"stage", f.stage}, {"error_type", f.type},
                      {"message", f.message}}
                     .dump()
              << std::endl;
    return f.code;
  };

  lf::PipelineConfig cfg;
  try {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw lf::Error("--set expects KEY=VALUE, got '" + s + "'");
      overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& path : lf::config_leaf_paths(defaults)) {
      if (path == "workspace") continue;
      if (app.count("--" + lf::snake_to_kebab(path))) overrides.emplace_back(path, leaf_values[path]);
    }
    const std::string section = command == "directions" ? "directions" : command == "forge" ? "forge" : "study";
    if (samples) overrides.emplace_back(section + (section == "study" ? ".questions" : ".samples"), std::to_string(*samples));
    if (seed) overrides.emplace_back(section + ".seed", std::to_string(*seed));
    if (mode) overrides.emplace_back("study.mode", *mode);
    if (host) overrides.emplace_back("study.host", *host);
    if (port) overrides.emplace_back("study.port", std::to_string(*port));
    if (!workspace.empty()) overrides.emplace_back("workspace", workspace);
    cfg = lf::load_pipeline_config(config_file.empty() ? std::nullopt : std::optional<fs::path>(config_file), overrides);
  } catch (const std::exception& e) {
    return fail({"config", kConfigError, "config", e.what()});
  }

  try {
    Json result;
    if (command == "directions") result = cmd_directions(cfg, task, dry_run);
    else if (command == "forge") result = cmd_forge(cfg, task, dry_run);
    else if (command == "train") result = cmd_train(cfg, task, view, dry_run);
    else if (command == "infer") result = cmd_infer(cfg, task, view, inputs, output, checkpoint, dry_run);
    else if (command == "eval-fid") result = cmd_eval_fid(cfg, a, b, task, view, dry_run);
    else if (command == "study build") result = cmd_study_build(cfg, id, a, b, sources, method_a, method_b, force, dry_run);
    else if (command == "study results") result = cmd_study_results(cfg, id, dry_run);
    else if (command == "study serve") return cmd_study_serve(cfg, ids, dry_run);
    else throw lf::Error("unknown command " + command);

    Json summary = {{"command", command},
                    {"status", "ok"},
                    {"tool_version", lf::kToolVersion},
                    {"workspace", cfg.workspace.string()},
                    {"config_sha256", lf::sha256_hex(cfg.snapshot.dump())}};
    if (dry_run) summary["dry_run"] = true;
    summary["result"] = result;
    std::cout << summary.dump(1) << std::endl;
    return kOk;
  } catch (const lf::ShapeError& e) {
    return fail({command, kShapeError, "shape", e.what()});
  } catch (const lf::Error& e) {
    return fail({command, kStageError, "stage", e.what()});
  } catch (const Json::exception& e) {
    return fail({command, kStageError, "json", e.what()});
  } catch (const std::exception& e) {
    return fail({command, kStageError, "internal", e.what()});
  }
}
