#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "dawid_skene.hpp"
#include "error.hpp"
#include "hash.hpp"
#include "json_util.hpp"
#include "study.hpp"

namespace lf {

enum class SubmitStatus { Accepted, Duplicate, UnknownQuestion, UnknownWorker, NotIssued, BadChoice };

inline std::string to_string(SubmitStatus s) {
  switch (s) {
    case SubmitStatus::Accepted: return "accepted";
    case SubmitStatus::Duplicate: return "duplicate";
    case SubmitStatus::UnknownQuestion: return "unknown question";
    case SubmitStatus::UnknownWorker: return "unknown worker";
    case SubmitStatus::NotIssued: return "question not issued to this worker";
    case SubmitStatus::BadChoice: return "choice must be left or right";
  }
  return "?";
}

struct StudyResults {
  AggregationResult aggregation;
  WinrateResult winrate;
  std::size_t answers = 0;

  Json to_json() const {
    return {{"answers", answers}, {"aggregation", aggregation.to_json()}, {"winrate", winrate.to_json()}};
  }
};

/// Offline aggregation of a question set and an answer log; the service's results
/// endpoint is defined as exactly this computation.
inline StudyResults aggregate_study(const std::vector<StudyQuestion>& questions, const std::vector<StudyAnswer>& answers,
                                    double min_conf = 0.95) {
  require(!answers.empty(), "study results: no answers recorded");
  StudyResults r;
  r.answers = answers.size();
  r.aggregation = aggregate_dawid_skene(votes_from_answers(questions, answers));
  r.winrate = filter_and_winrate(r.aggregation, min_conf);
  return r;
}

/// Assignment and persistence for one study. All public members are thread-safe.
/// State is the question file plus the replayed answer log; reservations (questions
/// issued but not yet answered) live in memory only and expire after `reservation_ttl`.
class StudyState {
 public:
  using Clock = std::chrono::steady_clock;

  explicit StudyState(std::filesystem::path dir, std::chrono::seconds reservation_ttl = std::chrono::seconds(600))
      : dir_(std::move(dir)), def_(load_study(dir_)), ttl_(reservation_ttl) {
    for (std::size_t i = 0; i < def_.questions.size(); ++i) index_[def_.questions[i].id] = i;
    answered_.assign(def_.questions.size(), 0);
    replay();
  }

  const StudyDefinition& definition() const { return def_; }
  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path log_path() const { return dir_ / "answers.jsonl"; }

  /// Question view for `worker`, or {"status": "complete"}. Never includes hidden labels.
  Json next_question(const std::string& worker) {
    require(!worker.empty(), "worker id must be non-empty");
    std::lock_guard lock(mu_);
    workers_.insert(worker);
    expire_reservations();
    auto& mine = reservations_by_worker_[worker];
    if (mine) return view(*mine, worker);

    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < def_.questions.size(); ++i) {
      if (done_.count({worker, i}) || load(i) >= def_.answers_target) continue;
      if (!best || load(i) < load(*best)) best = i;  // index order == id order: ties go to the lower id
    }
    if (!best) return {{"status", "complete"}, {"progress", progress(worker)}};
    mine = *best;
    reserved_[*best][worker] = Clock::now();
    return view(*best, worker);
  }

  SubmitStatus submit(const std::string& worker, const std::string& question, const std::string& choice) {
    if (choice != "left" && choice != "right") return SubmitStatus::BadChoice;
    std::lock_guard lock(mu_);
    const auto it = index_.find(question);
    if (it == index_.end()) return SubmitStatus::UnknownQuestion;
    if (!workers_.count(worker)) return SubmitStatus::UnknownWorker;
    const std::size_t q = it->second;
    if (done_.count({worker, q})) return SubmitStatus::Duplicate;
    expire_reservations();
    const bool holds = reserved_[q].count(worker) != 0;
    if (!holds && load(q) >= def_.answers_target) return SubmitStatus::NotIssued;

    StudyAnswer a{question, worker, choice, iso8601_now()};
    append(a);
    release(worker, q);
    record(a, q);
    return SubmitStatus::Accepted;
  }

  std::vector<StudyAnswer> answers() const {
    std::lock_guard lock(mu_);
    return answers_;
  }

  std::vector<int> answer_counts() const {
    std::lock_guard lock(mu_);
    return answered_;
  }

  StudyResults results(double min_conf = 0.95) const {
    std::vector<StudyAnswer> snapshot = answers();
    return aggregate_study(def_.questions, snapshot, min_conf);
  }

 private:
  int load(std::size_t q) const {
    const auto it = reserved_.find(q);
    return answered_[q] + (it == reserved_.end() ? 0 : static_cast<int>(it->second.size()));
  }

  Json progress(const std::string& worker) const {
    std::size_t n = 0;
    for (const auto& [w, q] : done_) n += w == worker;
    return {{"answered", n}, {"total", def_.questions.size()}};
  }

  Json view(std::size_t q, const std::string& worker) const {
    const auto& s = def_.questions[q];
    const std::string base = "/media/" + def_.id + "/";
    Json j = {{"status", "question"},
              {"question_id", s.id},
              {"mode", to_string(s.mode)},
              {"instruction", def_.instruction},
              {"left_url", base + s.left},
              {"right_url", base + s.right},
              {"progress", progress(worker)}};
    if (s.source) j["source_url"] = base + *s.source;
    return j;
  }

  void expire_reservations() {
    const auto now = Clock::now();
    for (auto& [q, holders] : reserved_)
      for (auto it = holders.begin(); it != holders.end();) {
        if (now - it->second > ttl_) {
          reservations_by_worker_[it->first].reset();
          it = holders.erase(it);
        } else {
          ++it;
        }
      }
  }

  void release(const std::string& worker, std::size_t q) {
    reserved_[q].erase(worker);
    auto& mine = reservations_by_worker_[worker];
    if (mine && *mine == q) mine.reset();
  }

  void record(const StudyAnswer& a, std::size_t q) {
    answers_.push_back(a);
    done_.insert({a.worker_id, q});
    answered_[q]++;
  }

  void replay() {
    const auto path = log_path();
    if (!std::filesystem::exists(path)) return;
    std::string text = read_file(path);
    const std::size_t keep = text.rfind('\n') == std::string::npos ? 0 : text.rfind('\n') + 1;
    if (keep != text.size()) std::filesystem::resize_file(path, keep);  // drop a torn final line
    for (const auto& a : parse_answer_log(text.substr(0, keep))) {
      const auto it = index_.find(a.question_id);
      require(it != index_.end(), "answer log refers to unknown question " + a.question_id);
      if (done_.count({a.worker_id, it->second})) continue;
      workers_.insert(a.worker_id);
      record(a, it->second);
    }
  }

  void append(const StudyAnswer& a) {
    const std::string line = a.to_json().dump() + "\n";
    const int fd = ::open(log_path().c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) throw Error("cannot open answer log " + log_path().string());
    std::size_t off = 0;
    while (off < line.size()) {
      const ssize_t n = ::write(fd, line.data() + off, line.size() - off);
      if (n <= 0) {
        ::close(fd);
        throw Error("short write to answer log");
      }
      off += static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
  }

  std::filesystem::path dir_;
  StudyDefinition def_;
  std::chrono::seconds ttl_;
  mutable std::mutex mu_;
  std::map<std::string, std::size_t> index_;
  std::vector<int> answered_;
  std::vector<StudyAnswer> answers_;
  std::set<std::pair<std::string, std::size_t>> done_;
  std::set<std::string> workers_;
  std::map<std::size_t, std::map<std::string, Clock::time_point>> reserved_;
  std::map<std::string, std::optional<std::size_t>> reservations_by_worker_;
};

}  // namespace lf
