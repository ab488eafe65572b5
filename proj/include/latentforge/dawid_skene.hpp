#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "error.hpp"
#include "json_util.hpp"

namespace lf {

/// One vote: label 0 means method A was preferred, 1 means method B.
struct Vote {
  std::string question;
  std::string worker;
  int label = 0;
};

struct DawidSkeneOptions {
  double tol = 1e-6;
  int max_iter = 100;
  double alpha = 0.01;  // additive smoothing of prior and confusion counts
};

struct AggregationResult {
  std::vector<std::string> questions;                // sorted ids
  std::vector<std::array<double, 2>> posteriors;     // aligned with questions
  std::map<std::string, std::array<std::array<double, 2>, 2>> confusion;  // worker -> [true][answered]
  std::array<double, 2> prior{0.5, 0.5};
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective;  // penalized log-likelihood after each M-step

  Json to_json() const {
    Json q = Json::array();
    for (std::size_t i = 0; i < questions.size(); ++i)
      q.push_back({{"question", questions[i]}, {"posterior", {posteriors[i][0], posteriors[i][1]}}});
    Json w = Json::object();
    for (const auto& [id, m] : confusion) w[id] = {{m[0][0], m[0][1]}, {m[1][0], m[1][1]}};
    return {{"questions", q}, {"confusion", w}, {"prior", {prior[0], prior[1]}},
            {"iterations", iterations}, {"converged", converged}, {"objective", objective}};
  }
};

namespace detail {

inline double log_sum_exp2(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace detail

/// Binary Dawid-Skene EM. Votes are processed in canonical (question, worker) order so
/// the result does not depend on input order. The penalized (MAP) log-likelihood is
/// checked to be non-decreasing at every iteration.
inline AggregationResult aggregate_dawid_skene(std::vector<Vote> votes, const DawidSkeneOptions& opt = {}) {
  require(!votes.empty(), "dawid-skene: empty answer set");
  require(opt.alpha > 0.0 && opt.tol > 0.0 && opt.max_iter >= 1, "dawid-skene: invalid options");
  for (const auto& v : votes) require(v.label == 0 || v.label == 1, "dawid-skene: label must be 0 or 1");
  std::sort(votes.begin(), votes.end(), [](const Vote& a, const Vote& b) {
    return std::tie(a.question, a.worker, a.label) < std::tie(b.question, b.worker, b.label);
  });

  AggregationResult r;
  std::map<std::string, std::size_t> qidx, widx;
  for (const auto& v : votes) {
    qidx.emplace(v.question, 0);
    widx.emplace(v.worker, 0);
  }
  for (auto& [id, i] : qidx) {
    i = r.questions.size();
    r.questions.push_back(id);
  }
  std::vector<std::string> workers;
  for (auto& [id, i] : widx) {
    i = workers.size();
    workers.push_back(id);
  }
  struct Edge {
    std::size_t q, w;
    int label;
  };
  std::vector<Edge> edges;
  for (const auto& v : votes) edges.push_back({qidx[v.question], widx[v.worker], v.label});

  const std::size_t nq = r.questions.size(), nw = workers.size();
  // Majority-vote initialization; ties split uniformly.
  std::vector<std::array<double, 2>> post(nq, {0.0, 0.0});
  {
    std::vector<std::array<int, 2>> counts(nq, {0, 0});
    for (const auto& e : edges) counts[e.q][e.label]++;
    for (std::size_t q = 0; q < nq; ++q) {
      if (counts[q][0] > counts[q][1]) post[q] = {1.0, 0.0};
      else if (counts[q][1] > counts[q][0]) post[q] = {0.0, 1.0};
      else post[q] = {0.5, 0.5};
    }
  }

  const double a = opt.alpha;
  std::array<double, 2> prior{};
  std::vector<std::array<std::array<double, 2>, 2>> conf(nw);
  for (int iter = 1; iter <= opt.max_iter; ++iter) {
    // M-step
    for (int k = 0; k < 2; ++k) {
      double s = 0.0;
      for (const auto& p : post) s += p[k];
      prior[k] = (s + a) / (static_cast<double>(nq) + 2 * a);
    }
    std::vector<std::array<std::array<double, 2>, 2>> counts(nw, {{{0, 0}, {0, 0}}});
    for (const auto& e : edges)
      for (int k = 0; k < 2; ++k) counts[e.w][k][e.label] += post[e.q][k];
    for (std::size_t w = 0; w < nw; ++w)
      for (int k = 0; k < 2; ++k) {
        const double row = counts[w][k][0] + counts[w][k][1];
        for (int l = 0; l < 2; ++l) conf[w][k][l] = (counts[w][k][l] + a) / (row + 2 * a);
      }

    // E-step, accumulating the marginal log-likelihood under the new parameters.
    std::vector<std::array<double, 2>> logp(nq);
    for (std::size_t q = 0; q < nq; ++q) logp[q] = {std::log(prior[0]), std::log(prior[1])};
    for (const auto& e : edges)
      for (int k = 0; k < 2; ++k) logp[e.q][k] += std::log(conf[e.w][k][e.label]);
    double loglik = 0.0, change = 0.0;
    for (std::size_t q = 0; q < nq; ++q) {
      const double z = detail::log_sum_exp2(logp[q][0], logp[q][1]);
      loglik += z;
      const std::array<double, 2> next{std::exp(logp[q][0] - z), std::exp(logp[q][1] - z)};
      change = std::max(change, std::abs(next[0] - post[q][0]));
      post[q] = next;
    }
    double penalty = 0.0;
    for (int k = 0; k < 2; ++k) penalty += a * std::log(prior[k]);
    for (const auto& m : conf)
      for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l) penalty += a * std::log(m[k][l]);
    const double objective = loglik + penalty;
    if (!r.objective.empty() && objective < r.objective.back() - 1e-9 * std::max(1.0, std::abs(objective)))
      throw Error("dawid-skene: objective decreased at iteration " + std::to_string(iter));
    r.objective.push_back(objective);
    r.iterations = iter;
    if (change < opt.tol) {
      r.converged = true;
      break;
    }
  }

  r.posteriors = post;
  r.prior = prior;
  for (std::size_t w = 0; w < nw; ++w) r.confusion[workers[w]] = conf[w];
  return r;
}

/// Plain majority vote per question (ties count as unresolved, -1).
inline std::map<std::string, int> majority_vote(const std::vector<Vote>& votes) {
  std::map<std::string, std::array<int, 2>> counts;
  for (const auto& v : votes) counts[v.question][v.label]++;
  std::map<std::string, int> out;
  for (const auto& [q, c] : counts) out[q] = c[0] > c[1] ? 0 : c[1] > c[0] ? 1 : -1;
  return out;
}

struct WinrateResult {
  std::vector<std::string> retained;
  std::size_t total = 0;
  double winrate = 0.0;        // fraction of retained questions whose MAP label is method A
  double drop_fraction = 0.0;  // informational

  Json to_json() const {
    return {{"retained", retained.size()}, {"total", total}, {"winrate", winrate}, {"drop_fraction", drop_fraction}};
  }
};

inline WinrateResult filter_and_winrate(const AggregationResult& result, double min_conf = 0.95) {
  WinrateResult w;
  w.total = result.questions.size();
  std::size_t wins = 0;
  for (std::size_t i = 0; i < result.questions.size(); ++i) {
    const auto& p = result.posteriors[i];
    if (std::max(p[0], p[1]) < min_conf) continue;
    w.retained.push_back(result.questions[i]);
    if (p[0] > p[1]) ++wins;
  }
  require(!w.retained.empty(), "filter_and_winrate: every question fell below the confidence threshold");
  w.winrate = static_cast<double>(wins) / w.retained.size();
  w.drop_fraction = 1.0 - static_cast<double>(w.retained.size()) / w.total;
  return w;
}

}  // namespace lf
