#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "dawid_skene.hpp"
#include "error.hpp"
#include "hash.hpp"
#include "json_util.hpp"
#include "rng.hpp"
#include "version.hpp"

namespace lf {

enum class StudyMode { Quality, Realism };

inline std::string to_string(StudyMode m) { return m == StudyMode::Quality ? "quality" : "realism"; }

inline StudyMode parse_study_mode(const std::string& s) {
  if (s == "quality") return StudyMode::Quality;
  if (s == "realism") return StudyMode::Realism;
  throw Error("unknown study mode '" + s + "' (expected quality or realism)");
}

inline std::string default_instruction(StudyMode m) {
  return m == StudyMode::Quality ? "Which of the two images is the better edit of the source image?"
                                 : "Which of the two images looks more realistic?";
}

struct StudyQuestion {
  std::string id;
  StudyMode mode = StudyMode::Quality;
  std::optional<std::string> source;  // quality mode only
  std::string left, right;
  int left_method = 0, right_method = 1;  // hidden: 0 = method A, 1 = method B
  bool shuffled = false;                  // true when method B is on the left

  Json to_json() const {
    Json j = {{"id", id},
              {"mode", to_string(mode)},
              {"left", left},
              {"right", right},
              {"left_method", left_method},
              {"right_method", right_method},
              {"shuffled", shuffled}};
    if (source) j["source"] = *source;
    return j;
  }

  static StudyQuestion from_json(const Json& j) {
    StudyQuestion q;
    q.id = j.at("id").get<std::string>();
    q.mode = parse_study_mode(j.at("mode").get<std::string>());
    if (j.contains("source")) q.source = j.at("source").get<std::string>();
    q.left = j.at("left").get<std::string>();
    q.right = j.at("right").get<std::string>();
    q.left_method = j.at("left_method").get<int>();
    q.right_method = j.at("right_method").get<int>();
    q.shuffled = j.at("shuffled").get<bool>();
    if (q.mode == StudyMode::Quality) require(q.source.has_value(), "study question " + q.id + ": quality mode needs a source");
    if (q.mode == StudyMode::Realism) require(!q.source, "study question " + q.id + ": realism mode must not carry a source");
    return q;
  }
};

inline std::string question_id(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "q%04zu", i);
  return buf;
}

/// Samples item indices (repeated shuffled passes when n_questions exceeds the item
/// count) and puts method A left or right by a seeded coin flip.
inline std::vector<StudyQuestion> build_study(const std::vector<std::string>& outputs_a,
                                              const std::vector<std::string>& outputs_b,
                                              const std::vector<std::string>& sources, StudyMode mode,
                                              std::size_t n_questions = 1000, std::uint64_t seed = 17) {
  require(!outputs_a.empty() && outputs_a.size() == outputs_b.size(), "build_study: output lists are misaligned");
  if (mode == StudyMode::Quality)
    require(sources.size() == outputs_a.size(), "build_study: quality mode needs one source per output");
  require(n_questions >= 1, "build_study: n_questions must be positive");

  Rng rng(seed, 0, 0x57d);
  std::vector<std::size_t> picks;
  std::vector<std::size_t> order(outputs_a.size());
  while (picks.size() < n_questions) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    for (std::size_t i : order) {
      if (picks.size() == n_questions) break;
      picks.push_back(i);
    }
  }
  std::vector<StudyQuestion> out;
  for (std::size_t q = 0; q < picks.size(); ++q) {
    const std::size_t i = picks[q];
    StudyQuestion s;
    s.id = question_id(q);
    s.mode = mode;
    if (mode == StudyMode::Quality) s.source = sources[i];
    s.shuffled = rng.coin();
    s.left = s.shuffled ? outputs_b[i] : outputs_a[i];
    s.right = s.shuffled ? outputs_a[i] : outputs_b[i];
    s.left_method = s.shuffled ? 1 : 0;
    s.right_method = s.shuffled ? 0 : 1;
    out.push_back(std::move(s));
  }
  return out;
}

struct StudyAnswer {
  std::string question_id;
  std::string worker_id;
  std::string choice;  // "left" | "right"
  std::string timestamp;

  Json to_json() const {
    return {{"question_id", question_id}, {"worker_id", worker_id}, {"choice", choice},
            {"timestamp_iso8601", timestamp}};
  }
  static StudyAnswer from_json(const Json& j) {
    StudyAnswer a{j.at("question_id").get<std::string>(), j.at("worker_id").get<std::string>(),
                  j.at("choice").get<std::string>(), j.at("timestamp_iso8601").get<std::string>()};
    require(a.choice == "left" || a.choice == "right", "answer choice must be left or right");
    return a;
  }
};

inline std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

/// Maps left/right choices to method labels through each question's hidden assignment.
inline std::vector<Vote> votes_from_answers(const std::vector<StudyQuestion>& questions,
                                            const std::vector<StudyAnswer>& answers) {
  std::map<std::string, const StudyQuestion*> by_id;
  for (const auto& q : questions) by_id[q.id] = &q;
  std::vector<Vote> votes;
  for (const auto& a : answers) {
    const auto it = by_id.find(a.question_id);
    require(it != by_id.end(), "answer refers to unknown question " + a.question_id);
    votes.push_back({a.question_id, a.worker_id, a.choice == "left" ? it->second->left_method : it->second->right_method});
  }
  return votes;
}

/// Parses an answers log; a torn final line (crash mid-append) is ignored.
inline std::vector<StudyAnswer> parse_answer_log(const std::string& text) {
  std::vector<StudyAnswer> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) break;  // unterminated tail
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    out.push_back(StudyAnswer::from_json(Json::parse(line)));
  }
  return out;
}

/// Study directory layout: study.json (immutable question file), media/ (opaque image
/// names), answers.jsonl (append-only log).
struct StudyDefinition {
  std::string id;
  StudyMode mode = StudyMode::Quality;
  std::string instruction;
  int answers_target = 10;
  std::string method_a = "A", method_b = "B";
  std::vector<StudyQuestion> questions;
  Json config = Json::object();

  Json to_json() const {
    Json qs = Json::array();
    for (const auto& q : questions) qs.push_back(q.to_json());
    return {{"id", id},
            {"mode", to_string(mode)},
            {"instruction", instruction},
            {"answers_target", answers_target},
            {"method_a", method_a},
            {"method_b", method_b},
            {"config", config},
            {"tool_version", kToolVersion},
            {"questions", qs}};
  }

  static StudyDefinition from_json(const Json& j) {
    StudyDefinition d;
    d.id = j.at("id").get<std::string>();
    d.mode = parse_study_mode(j.at("mode").get<std::string>());
    d.instruction = j.at("instruction").get<std::string>();
    d.answers_target = j.at("answers_target").get<int>();
    d.method_a = j.value("method_a", d.method_a);
    d.method_b = j.value("method_b", d.method_b);
    d.config = j.value("config", Json::object());
    for (const auto& q : j.at("questions")) d.questions.push_back(StudyQuestion::from_json(q));
    require(d.answers_target >= 1, "study: answers_target must be positive");
    return d;
  }
};

/// Copies question images into `dir`/media under opaque names and writes study.json.
inline StudyDefinition export_study(const std::filesystem::path& dir, StudyDefinition def) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "media");
  for (auto& q : def.questions) {
    auto copy = [&](std::string& ref, const std::string& suffix) {
      const std::string name = q.id + "_" + suffix + ".png";
      write_file(dir / "media" / name, read_file(ref));
      ref = name;
    };
    copy(q.left, "l");
    copy(q.right, "r");
    if (q.source) copy(*q.source, "src");
  }
  write_file(dir / "study.json", def.to_json().dump(1) + "\n");
  return def;
}

inline StudyDefinition load_study(const std::filesystem::path& dir) {
  return StudyDefinition::from_json(Json::parse(read_file(dir / "study.json")));
}

}  // namespace lf
