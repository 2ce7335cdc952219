#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "corefed/errors.hpp"
#include "corefed/models.hpp"
#include "corefed/rng.hpp"
#include "corefed/utility.hpp"

// Fairness verification. The certificate inequality
// sum_i w_i u_i(theta') / u_i(theta*) <= sum_i w_i is a sufficient condition
// for (weighted) core-stability; the exhaustive coalition search is the
// ground-truth check for discrete candidate sets.

namespace corefed {

struct UtilityMatrix {
  Eigen::MatrixXd values;   // rows = agents, columns = candidate predictors
  Eigen::VectorXd weights;  // per agent; empty means all ones

  int n_agents() const { return static_cast<int>(values.rows()); }
  int n_candidates() const { return static_cast<int>(values.cols()); }

  Eigen::VectorXd effective_weights() const {
    if (weights.size() == 0) return Eigen::VectorXd::Ones(values.rows());
    return weights;
  }

  void validate() const {
    if (values.rows() == 0 || values.cols() == 0)
      throw InvalidShape("UtilityMatrix: empty matrix");
    if ((values.array() <= 0.0).any())
      throw NonPositiveUtility("UtilityMatrix: entries must be strictly positive");
    if (weights.size() != 0) {
      if (weights.size() != values.rows())
        throw LengthMismatch("UtilityMatrix: weights size != agent count");
      if ((weights.array() <= 0.0).any())
        throw InvalidParams("UtilityMatrix: weights must be > 0");
    }
  }
};

struct BlockingWitness {
  std::vector<int> coalition;
  int candidate = 0;
};

struct Certificate {
  double ratio_sum = 0.0;
  double threshold = 0.0;  // n, or sum of weights in the weighted case
  bool holds = false;      // ratio_sum <= threshold
  std::optional<BlockingWitness> witness;
};

// Margin below which a strict improvement is treated as float noise; a
// blocking claim must clear it.
inline constexpr double kStrictMargin = 1e-9;

namespace detail {

inline void check_positive(const Eigen::VectorXd& u, const char* what) {
  if ((u.array() <= 0.0).any())
    throw NonPositiveUtility(std::string(what) + ": utilities must be strictly positive");
}

}  // namespace detail

// ratio_sum = sum_i w_i u_alt_i / u_ref_i against threshold sum_i w_i.
// Identical vectors land exactly on the threshold (each ratio is 1.0) and
// hold at the boundary.
inline Certificate core_ratio(const Eigen::VectorXd& u_ref, const Eigen::VectorXd& u_alt,
                              const Eigen::VectorXd& weights = {}) {
  if (u_ref.size() != u_alt.size()) throw LengthMismatch("core_ratio: length mismatch");
  Eigen::VectorXd w =
      weights.size() == 0 ? Eigen::VectorXd::Ones(u_ref.size()) : Eigen::VectorXd(weights);
  if (w.size() != u_ref.size()) throw LengthMismatch("core_ratio: weights length mismatch");
  detail::check_positive(u_ref, "core_ratio");
  detail::check_positive(u_alt, "core_ratio");
  if ((w.array() <= 0.0).any()) throw InvalidParams("core_ratio: weights must be > 0");

  Certificate cert;
  for (Eigen::Index i = 0; i < u_ref.size(); ++i) {
    cert.ratio_sum += w(i) * (u_alt(i) / u_ref(i));
    cert.threshold += w(i);
  }
  cert.holds = cert.ratio_sum <= cert.threshold;
  return cert;
}

// Exhaustive blocking-coalition search over a discrete candidate set.
// Returns the first pair (S, c) with
//   (sum_{j in S} w_j / sum_j w_j) * u_i(c) >= u_i(ref)  for all i in S
// and at least one agent clearing the strict margin. Subsets are visited in
// lexicographic element order with supersets before their prefixes (so
// {0,1,2} precedes {0,1} precedes {0}), candidates by ascending index; the
// witness is deterministic and favors the largest coalition on a chain.
// Guarded at 20 agents.
inline std::optional<BlockingWitness> find_blocking_coalition(const UtilityMatrix& m,
                                                              int ref_col) {
  m.validate();
  if (m.n_agents() > 20)
    throw TooManyAgents("find_blocking_coalition: exhaustive search capped at 20 agents");
  if (ref_col < 0 || ref_col >= m.n_candidates())
    throw InvalidParams("find_blocking_coalition: ref_col out of range");

  const Eigen::VectorXd w = m.effective_weights();
  const double total_weight = w.sum();

  std::vector<int> coalition;
  double coalition_weight = 0.0;

  auto blocks_with = [&](int candidate) {
    double share = coalition_weight / total_weight;
    bool strict = false;
    for (int i : coalition) {
      double scaled = share * m.values(i, candidate);
      if (scaled < m.values(i, ref_col)) return false;
      if (scaled > m.values(i, ref_col) + kStrictMargin) strict = true;
    }
    return strict;
  };

  std::optional<BlockingWitness> found;
  auto search = [&](auto&& self, int start) -> void {
    for (int i = start; i < m.n_agents() && !found; ++i) {
      coalition.push_back(i);
      coalition_weight += w(i);
      self(self, i + 1);  // extensions first: supersets precede prefixes
      for (int c = 0; c < m.n_candidates() && !found; ++c) {
        if (c == ref_col) continue;
        if (blocks_with(c)) found = BlockingWitness{coalition, c};
      }
      coalition_weight -= w(i);
      coalition.pop_back();
    }
  };
  search(search, 0);
  return found;
}

// Agent i passes iff u_at_theta_i >= (w_i / sum w) * u_best_i - tol.
inline std::vector<bool> check_proportionality(const Eigen::VectorXd& u_at_theta,
                                               const Eigen::VectorXd& u_best,
                                               const Eigen::VectorXd& weights = {},
                                               double tol = 1e-6) {
  if (u_at_theta.size() != u_best.size())
    throw LengthMismatch("check_proportionality: length mismatch");
  Eigen::VectorXd w = weights.size() == 0 ? Eigen::VectorXd::Ones(u_at_theta.size())
                                          : Eigen::VectorXd(weights);
  if (w.size() != u_at_theta.size())
    throw LengthMismatch("check_proportionality: weights length mismatch");
  detail::check_positive(u_at_theta, "check_proportionality");

  const double total = w.sum();
  std::vector<bool> verdicts(static_cast<std::size_t>(u_at_theta.size()));
  for (Eigen::Index i = 0; i < u_at_theta.size(); ++i)
    verdicts[static_cast<std::size_t>(i)] = u_at_theta(i) >= (w(i) / total) * u_best(i) - tol;
  return verdicts;
}

// True iff u_alt weakly dominates u_ref with at least one strict improvement.
inline bool check_pareto_dominated(const Eigen::VectorXd& u_ref, const Eigen::VectorXd& u_alt) {
  if (u_ref.size() != u_alt.size())
    throw LengthMismatch("check_pareto_dominated: length mismatch");
  bool strict = false;
  for (Eigen::Index i = 0; i < u_ref.size(); ++i) {
    if (u_alt(i) < u_ref(i)) return false;
    if (u_alt(i) > u_ref(i)) strict = true;
  }
  return strict;
}

struct PseudoCoreParams {
  double beta = 0.0;           // smoothness constant of the utilities
  double grad_norm_eps = 0.0;  // ||grad L(theta)||
  double k = 0.0;              // relaxation factor, > 1
  int n = 0;
  Eigen::VectorXd utilities;

  void validate() const {
    if (!(beta > 0.0)) throw InvalidParams("PseudoCoreParams: beta must be > 0");
    if (!(grad_norm_eps >= 0.0)) throw InvalidParams("PseudoCoreParams: eps must be >= 0");
    if (!(k > 1.0)) throw InvalidParams("PseudoCoreParams: k must exceed 1");
    if (n < 1 || utilities.size() != n)
      throw InvalidParams("PseudoCoreParams: utilities size must equal n");
    detail::check_positive(utilities, "PseudoCoreParams");
  }
};

// Radius of the (d, k)-pseudo core ball:
//   d = (-eps + sqrt(eps^2 + 2 beta (k-1) n sum_i u_i^-1)) / (beta sum_i u_i^-1)
inline double pseudo_core_radius(const PseudoCoreParams& p) {
  p.validate();
  const double inv_sum = p.utilities.cwiseInverse().sum();
  const double eps = p.grad_norm_eps;
  const double disc = eps * eps + 2.0 * p.beta * (p.k - 1.0) * p.n * inv_sum;
  return (-eps + std::sqrt(disc)) / (p.beta * inv_sum);
}

// Sampled lower bound on the smoothness constant beta of the agents'
// utilities: max over agents and probe pairs in the ball of
// ||grad u_i(x) - grad u_i(y)|| / ||x - y||. Monotone in n_probes for a
// fixed seed.
inline double estimate_beta(const ModelSpec& spec, const Predictor& theta,
                            const std::vector<AgentProfile>& agents, double radius,
                            int n_probes, std::uint64_t seed) {
  if (n_probes < 1) throw InvalidParams("estimate_beta: n_probes must be >= 1");
  if (!(radius > 0.0)) throw InvalidParams("estimate_beta: radius must be > 0");
  theta.validate(spec);

  auto eng = rng::make_engine(seed, {0x62657461ULL});
  const Eigen::VectorXd center = theta.flat();
  const auto dim = center.size();

  auto sample_in_ball = [&]() {
    Eigen::VectorXd dir(dim);
    for (Eigen::Index j = 0; j < dim; ++j) dir(j) = rng::normal(eng);
    double norm = dir.norm();
    if (norm < 1e-300) dir.setConstant(1.0 / std::sqrt(static_cast<double>(dim)));
    else dir /= norm;
    double r = radius * std::pow(rng::uniform01(eng), 1.0 / static_cast<double>(dim));
    return Eigen::VectorXd(center + r * dir);
  };

  double best = 0.0;
  for (int probe = 0; probe < n_probes; ++probe) {
    Eigen::VectorXd x = sample_in_ball();
    Eigen::VectorXd y = sample_in_ball();
    double gap = (x - y).norm();
    if (gap < 1e-12) continue;
    for (const auto& agent : agents) {
      Eigen::VectorXd gx = loss_gradient(spec, Predictor::from_flat(spec, x), agent.dataset);
      Eigen::VectorXd gy = loss_gradient(spec, Predictor::from_flat(spec, y), agent.dataset);
      best = std::max(best, (gx - gy).norm() / gap);
    }
  }
  return best;
}

}  // namespace corefed
