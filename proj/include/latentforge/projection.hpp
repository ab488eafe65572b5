#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <string>
#include <vector>

#include "error.hpp"
#include "generator.hpp"
#include "types.hpp"

namespace lf {

enum class ProjectionMode { W, WPlus };

inline ProjectionMode projection_mode_from_string(const std::string& s) {
  if (s == "w" || s == "W") return ProjectionMode::W;
  if (s == "w+" || s == "W+" || s == "wplus") return ProjectionMode::WPlus;
  throw Error("unknown projection mode '" + s + "'");
}

struct ProjectionOptions {
  ProjectionMode mode = ProjectionMode::WPlus;
  int step_budget = 20;
  int restarts = 1;
  std::uint64_t seed = 0;
  double damping = 1e-9;
};

struct ProjectionResult {
  ExtendedCode code;
  double loss = std::numeric_limits<double>::infinity();  // mean squared pixel error
  int steps = 0;
  int restart = 0;
};

inline double reconstruction_mse(const Image& a, const Image& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

namespace detail {

inline Eigen::VectorXd damped_solve(const Eigen::MatrixXd& jac, const Eigen::VectorXd& residual, double damping) {
  Eigen::MatrixXd normal = jac.transpose() * jac;
  normal.diagonal().array() += damping;
  return normal.ldlt().solve(jac.transpose() * residual);
}

inline ProjectionResult project_once(const Image& target, const Generator& gen, const ProjectionOptions& opt,
                                     int restart) {
  const auto s = gen.shape();
  Eigen::VectorXd init = Eigen::VectorXd::Zero(s.latent_dim);
  if (restart > 0) init = gen.map_latent(sample_z(opt.seed, static_cast<std::uint64_t>(restart), s.latent_dim)).values;
  ProjectionResult best{broadcast(IntermediateCode(init), s.layers), 0.0, 0, restart};
  best.loss = reconstruction_mse(gen.synthesize(best.code), target);
  if (!std::isfinite(best.loss)) throw Error("project: non-finite reconstruction loss");

  for (int step = 0; step < opt.step_budget; ++step) {
    const Image current = gen.synthesize(best.code);
    Eigen::VectorXd residual(static_cast<Eigen::Index>(target.size()));
    for (std::size_t i = 0; i < target.size(); ++i) residual[static_cast<Eigen::Index>(i)] = target.pixels[i] - current.pixels[i];

    Eigen::MatrixXd direction(s.layers, s.latent_dim);
    if (opt.mode == ProjectionMode::WPlus) {
      for (int l = 0; l < s.layers; ++l)
        direction.row(l) = damped_solve(gen.layer_jacobian(best.code, l), residual, opt.damping).transpose();
    } else {
      Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(s.pixel_count(), s.latent_dim);
      for (int l = 0; l < s.layers; ++l) jac += gen.layer_jacobian(best.code, l);
      const Eigen::VectorXd delta = damped_solve(jac, residual, opt.damping);
      for (int l = 0; l < s.layers; ++l) direction.row(l) = delta.transpose();
    }

    // Backtracking on the Gauss-Newton step.
    bool improved = false;
    for (double scale = 1.0; scale > 1e-4; scale *= 0.5) {
      ExtendedCode candidate(best.code.rows + scale * direction);
      const double loss = reconstruction_mse(gen.synthesize(candidate), target);
      if (!std::isfinite(loss)) throw Error("project: non-finite reconstruction loss");
      if (loss < best.loss) {
        best.code = std::move(candidate);
        best.loss = loss;
        improved = true;
        break;
      }
    }
    best.steps = step + 1;
    if (!improved || best.loss < 1e-24) break;
  }
  return best;
}

}  // namespace detail

/// Find the extended code whose synthesis best reconstructs `target` (pixel MSE).
///
/// W mode keeps all rows equal; W+ mode optimizes each layer row separately. Each
/// restart is a damped Gauss-Newton descent; the best loss wins, ties go to the
/// lowest restart index.
inline ProjectionResult project(const Image& target, const Generator& gen, const ProjectionOptions& opt = {}) {
  const auto s = gen.shape();
  require_shape(target.height == s.height && target.width == s.width, "project: image resolution mismatch");
  require(opt.restarts >= 1, "project: restarts must be at least 1");

  std::vector<std::future<ProjectionResult>> runs;
  for (int r = 0; r < opt.restarts; ++r)
    runs.push_back(std::async(opt.restarts > 1 ? std::launch::async : std::launch::deferred,
                              [&, r] { return detail::project_once(target, gen, opt, r); }));
  ProjectionResult best;
  for (auto& run : runs) {
    ProjectionResult result = run.get();
    if (result.loss < best.loss) best = std::move(result);
  }
  return best;
}

}  // namespace lf
