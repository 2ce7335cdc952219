#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "corefed/errors.hpp"
#include "corefed/models.hpp"
#include "corefed/utility.hpp"

// Centralized oracle for the Nash-welfare program: projected gradient ascent
// with a Barzilai-Borwein trial step and Armijo backtracking. The domain is
// an L2 ball of radius R (possibly infinite) for vector models and the unit
// simplex for SimplexToy. Accepted steps never decrease the objective and
// never push any utility below M * epsilon.

namespace corefed {

struct ArmijoParams {
  double shrink = 0.5;
  double sufficient_increase = 1e-4;
};

struct SolverConfig {
  int max_iters = 20000;
  double grad_tol = 1e-8;
  double domain_radius = 1e3;  // L2 ball; +inf = unconstrained
  ArmijoParams armijo;
  std::uint64_t seed = 0;
  UtilityConfig utility;

  void validate() const {
    if (max_iters < 1) throw InvalidParams("SolverConfig: max_iters must be >= 1");
    if (!(grad_tol > 0.0)) throw InvalidParams("SolverConfig: grad_tol must be > 0");
    if (!(domain_radius > 0.0)) throw InvalidParams("SolverConfig: domain_radius must be > 0");
    utility.validate();
  }
};

struct SolveResult {
  Predictor theta_star;
  double objective = 0.0;
  double grad_norm = 0.0;  // projected-gradient residual at theta_star
  int iterations = 0;
  bool converged = false;
};

inline Eigen::VectorXd project_ball(const Eigen::VectorXd& v, double radius) {
  if (!(radius > 0.0)) throw InvalidParams("project_ball: radius must be > 0");
  if (!std::isfinite(radius)) return v;
  double norm = v.norm();
  if (norm <= radius) return v;
  return v * (radius / norm);
}

// Euclidean projection onto the unit simplex (sorted-threshold rule).
// Idempotent; ties at equal coordinates resolve by the stable sorted order.
inline Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  const auto n = v.size();
  std::vector<double> sorted(v.data(), v.data() + n);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double running = 0.0;
  double threshold = 0.0;
  for (int j = 0; j < n; ++j) {
    running += sorted[static_cast<std::size_t>(j)];
    double candidate = (running - 1.0) / (j + 1);
    if (sorted[static_cast<std::size_t>(j)] - candidate > 0.0) threshold = candidate;
  }
  return (v.array() - threshold).max(0.0);
}

// Domain projection for a model family: simplex for SimplexToy, L2 ball
// otherwise.
inline Predictor project(const ModelSpec& spec, const Predictor& theta, double radius) {
  Eigen::VectorXd flat = theta.flat();
  if (spec.kind == ModelKind::SimplexToy) return Predictor::from_flat(spec, project_simplex(flat));
  return Predictor::from_flat(spec, project_ball(flat, radius));
}

namespace detail {

// Projected ascent on a generic objective. `objective` may return -inf to
// veto an iterate (utility positivity); `gradient` is evaluated at accepted
// iterates only.
struct AscentProblem {
  std::function<double(const Eigen::VectorXd&)> objective;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> project;
};

struct AscentOutcome {
  Eigen::VectorXd x;
  double value = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

inline AscentOutcome projected_ascent(const AscentProblem& p, Eigen::VectorXd x0,
                                      const SolverConfig& cfg) {
  cfg.validate();
  AscentOutcome out;
  Eigen::VectorXd x = p.project(x0);
  double fx = p.objective(x);
  if (!std::isfinite(fx))
    throw NonPositiveUtility("projected_ascent: infeasible start (degenerate utility)");

  Eigen::VectorXd g = p.gradient(x);
  // unit-step projected-gradient residual; reduces to ||g|| unconstrained
  auto residual_at = [&]() { return (p.project(x + g) - x).norm(); };
  double residual = residual_at();

  Eigen::VectorXd prev_x, prev_g;
  double step = 1.0;
  int it = 0;
  for (; it < cfg.max_iters && residual > cfg.grad_tol; ++it) {
    // Barzilai-Borwein trial step, clipped; fall back to growing the last
    // accepted step on the first iteration or degenerate curvature.
    if (prev_x.size() > 0) {
      Eigen::VectorXd s = x - prev_x;
      Eigen::VectorXd y = g - prev_g;
      double sy = std::abs(s.dot(y));
      if (sy > 1e-300) step = s.squaredNorm() / sy;
    } else {
      step *= 2.0;
    }
    step = std::clamp(step, 1e-12, 1e12);

    prev_x = x;
    prev_g = g;
    bool accepted = false;
    double trial = step;
    for (int bt = 0; bt < 200; ++bt) {
      Eigen::VectorXd cand = p.project(x + trial * g);
      double fc = p.objective(cand);
      double progress = g.dot(cand - x);
      if (std::isfinite(fc) && fc >= fx + cfg.armijo.sufficient_increase * progress &&
          fc >= fx) {
        x = cand;
        fx = fc;
        accepted = true;
        step = trial;
        break;
      }
      trial *= cfg.armijo.shrink;
      if (trial < 1e-18) break;
    }
    if (!accepted) break;  // no acceptable step along g
    g = p.gradient(x);
    residual = residual_at();
  }
  out.x = x;
  out.value = fx;
  out.residual = residual;
  out.converged = residual <= cfg.grad_tol;
  out.iterations = it;
  return out;
}

}  // namespace detail

// Maximizes sum_i w_i log u_i(theta) over the model domain. Backtracking
// rejects any step with a utility at or below M * epsilon, so the path never
// leaves the positive-utility region. Starts from the projected origin
// unless an initial predictor is supplied; returns a partial result with
// converged = false when iterations run out.
inline SolveResult maximize_nash(const std::vector<AgentProfile>& agents, const ModelSpec& spec,
                                 const SolverConfig& cfg, bool weights_on = false,
                                 const std::vector<double>& log_offsets = {},
                                 const std::optional<Predictor>& initial = {}) {
  spec.validate();
  for (const auto& agent : agents) agent.validate();

  detail::AscentProblem p;
  p.project = [&](const Eigen::VectorXd& v) {
    return corefed::project(spec, Predictor::from_flat(spec, v), cfg.domain_radius).flat();
  };
  p.objective = [&](const Eigen::VectorXd& v) {
    Predictor theta = Predictor::from_flat(spec, v);
    double total = 0.0;
    for (std::size_t i = 0; i < agents.size(); ++i) {
      double u = agents[i].cap - loss(spec, theta, agents[i].dataset);
      if (u <= agents[i].cap * cfg.utility.epsilon)
        return -std::numeric_limits<double>::infinity();
      total += (weights_on ? agents[i].weight : 1.0) * std::log(u);
      if (!log_offsets.empty()) total += log_offsets[i];
    }
    return total;
  };
  p.gradient = [&](const Eigen::VectorXd& v) {
    return nash_gradient(spec, Predictor::from_flat(spec, v), agents, cfg.utility, weights_on);
  };

  Eigen::VectorXd x0 =
      initial ? initial->flat() : Eigen::VectorXd::Zero(spec.param_dim());
  auto outcome = detail::projected_ascent(p, std::move(x0), cfg);
  SolveResult result;
  result.theta_star = Predictor::from_flat(spec, outcome.x);
  result.objective = outcome.value;
  result.grad_norm = outcome.residual;
  result.iterations = outcome.iterations;
  result.converged = outcome.converged;
  return result;
}

// Maximizes one agent's utility (minimizes its loss) over the domain; the
// proportionality reference point.
inline SolveResult maximize_agent_utility(const AgentProfile& agent, const ModelSpec& spec,
                                          const SolverConfig& cfg) {
  spec.validate();
  agent.validate();

  detail::AscentProblem p;
  p.project = [&](const Eigen::VectorXd& v) {
    return corefed::project(spec, Predictor::from_flat(spec, v), cfg.domain_radius).flat();
  };
  p.objective = [&](const Eigen::VectorXd& v) {
    return -loss(spec, Predictor::from_flat(spec, v), agent.dataset);
  };
  p.gradient = [&](const Eigen::VectorXd& v) {
    return Eigen::VectorXd(-loss_gradient(spec, Predictor::from_flat(spec, v), agent.dataset));
  };

  auto outcome =
      detail::projected_ascent(p, Eigen::VectorXd::Zero(spec.param_dim()), cfg);
  SolveResult result;
  result.theta_star = Predictor::from_flat(spec, outcome.x);
  result.objective = agent.cap > 0.0 ? agent.cap + outcome.value : outcome.value;
  result.grad_norm = outcome.residual;
  result.iterations = outcome.iterations;
  result.converged = outcome.converged;
  return result;
}

// ||projected nash gradient|| at theta; a residual <= grad_tol certifies an
// approximate fixed point of the best-response correspondence.
inline double fixed_point_residual(const ModelSpec& spec, const Predictor& theta,
                                   const std::vector<AgentProfile>& agents,
                                   const SolverConfig& cfg = {}, bool weights_on = false) {
  Eigen::VectorXd g = nash_gradient(spec, theta, agents, cfg.utility, weights_on);
  Eigen::VectorXd x = theta.flat();
  return (project(spec, Predictor::from_flat(spec, x + g), cfg.domain_radius).flat() - x).norm();
}

}  // namespace corefed
