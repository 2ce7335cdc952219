#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "corefed/data.hpp"
#include "corefed/models.hpp"
#include "corefed/rng.hpp"
#include "corefed/utility.hpp"

// Test-only oracles and instance builders. The finite-difference gradient is
// the independent reference for every analytic gradient in the library; it
// must not share code with the implementation paths it checks.

namespace testsup {

// Central finite differences, coordinate by coordinate, step scaled per
// coordinate. Error is O(h^2).
inline Eigen::VectorXd central_diff_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                             const Eigen::VectorXd& x) {
  const double h0 = std::cbrt(std::numeric_limits<double>::epsilon());
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = h0 * (1.0 + std::abs(x(i)));
    probe(i) = x(i) + h;
    const double fp = f(probe);
    probe(i) = x(i) - h;
    const double fm = f(probe);
    probe(i) = x(i);
    grad(i) = (fp - fm) / (2.0 * h);
  }
  return grad;
}

// Symmetric relative error ||a - b|| / (||a|| + ||b||); 0 when both vanish.
inline double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double denom = a.norm() + b.norm();
  if (denom < 1e-12) return 0.0;
  return (a - b).norm() / denom;
}

inline corefed::LabeledDataset tiny_dataset(std::initializer_list<std::vector<double>> xs,
                                            std::initializer_list<double> ys) {
  corefed::LabeledDataset ds;
  const auto n = static_cast<Eigen::Index>(xs.size());
  const auto d = static_cast<Eigen::Index>(xs.begin()->size());
  ds.features.resize(n, d);
  ds.targets.resize(n);
  Eigen::Index r = 0;
  for (const auto& row : xs) {
    for (Eigen::Index c = 0; c < d; ++c) ds.features(r, c) = row[static_cast<std::size_t>(c)];
    ++r;
  }
  Eigen::Index i = 0;
  for (double y : ys) ds.targets(i++) = y;
  return ds;
}

inline corefed::AgentProfile agent_with(int id, corefed::LabeledDataset ds, double cap,
                                        double weight = 1.0) {
  corefed::AgentProfile a;
  a.id = id;
  a.dataset = std::move(ds);
  a.cap = cap;
  a.weight = weight;
  return a;
}

// A random labeled dataset compatible with `spec` (classification labels for
// the MLP, signed labels for logistic, agent index for the simplex toy).
inline corefed::LabeledDataset random_dataset(const corefed::ModelSpec& spec, int n,
                                              std::mt19937_64& eng) {
  using corefed::ModelKind;
  if (spec.kind == ModelKind::SimplexToy) {
    int idx = static_cast<int>(eng() % static_cast<std::uint64_t>(spec.simplex_n));
    return corefed::simplex_agent_dataset(idx);
  }
  corefed::LabeledDataset ds;
  ds.features.resize(n, spec.input_dim);
  ds.targets.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < spec.input_dim; ++j) ds.features(i, j) = corefed::rng::normal(eng);
    switch (spec.kind) {
      case ModelKind::LinReg:
        ds.targets(i) = corefed::rng::normal(eng);
        break;
      case ModelKind::LogReg:
        ds.targets(i) = corefed::rng::uniform01(eng) < 0.5 ? -1.0 : 1.0;
        break;
      case ModelKind::SmoothMlp:
        ds.targets(i) =
            static_cast<double>(eng() % static_cast<std::uint64_t>(spec.output_dim()));
        break;
      case ModelKind::SimplexToy:
        break;
    }
  }
  return ds;
}

inline corefed::Predictor random_predictor(const corefed::ModelSpec& spec, std::mt19937_64& eng,
                                           double scale = 0.5) {
  Eigen::VectorXd flat(spec.param_dim());
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) = scale * corefed::rng::normal(eng);
  if (spec.kind == corefed::ModelKind::SimplexToy) {
    flat = flat.array().abs() + 0.1;
    flat /= flat.sum();
  }
  return corefed::Predictor::from_flat(spec, flat);
}

// Agents over a Dirichlet split of one synthetic classification task, with
// caps calibrated so every utility stays positive near the origin.
inline std::vector<corefed::AgentProfile> synthetic_logreg_agents(
    int n_agents, int dim, int samples, double dirichlet_alpha, std::uint64_t seed,
    const corefed::ModelSpec& spec) {
  auto pool =
      corefed::as_signed_binary(corefed::gen_synthetic_classification(samples, dim, 2, 2.0, seed));
  auto [plan, shards] = corefed::dirichlet_partition(pool, n_agents, dirichlet_alpha, seed);
  std::vector<corefed::AgentProfile> agents;
  for (int i = 0; i < n_agents; ++i) {
    if (shards[static_cast<std::size_t>(i)].size() == 0) return {};  // caller picks another seed
    agents.push_back(agent_with(i, shards[static_cast<std::size_t>(i)], 0.0));
  }
  auto eng = corefed::rng::make_engine(seed, {0x70726f6265ULL});
  std::vector<corefed::Predictor> probes{corefed::Predictor::zeros(spec)};
  for (int p = 0; p < 3; ++p) probes.push_back(random_predictor(spec, eng, 1.0));
  auto caps = corefed::calibrate_caps(spec, agents, probes);
  for (int i = 0; i < n_agents; ++i) agents[static_cast<std::size_t>(i)].cap = caps[static_cast<std::size_t>(i)];
  return agents;
}

}  // namespace testsup
