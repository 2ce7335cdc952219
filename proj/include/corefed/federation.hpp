#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "corefed/errors.hpp"
#include "corefed/models.hpp"
#include "corefed/rng.hpp"
#include "corefed/utility.hpp"

// Round-based client/server protocol. Each round: select K clients,
// broadcast theta, run E local epochs of (mini- or full-batch) gradient
// descent per client, then aggregate:
//
//   FedAvg            theta + sum_s (n_s / sum n) Delta_s
//   CoreFed           theta + (1/|S|) sum_s Delta_s / (M_s - L_s)
//   WeightedCoreFed   theta + (1/(Wbar |S|)) sum_s w_s Delta_s / (M_s - L_s)
//
// L_s is the client's loss at the incoming theta, before any local step.
// Updates are summed in ascending agent-id order, so the result is
// bit-deterministic and independent of client execution order.

namespace corefed {

enum class Aggregator { FedAvg, CoreFed, WeightedCoreFed };

inline std::string aggregator_name(Aggregator a) {
  switch (a) {
    case Aggregator::FedAvg: return "fedavg";
    case Aggregator::CoreFed: return "corefed";
    case Aggregator::WeightedCoreFed: return "weighted-corefed";
  }
  return "?";
}

struct RoundConfig {
  int total_rounds = 1;      // T
  int local_epochs = 1;      // E
  double learning_rate = 0.1;
  int clients_per_round = 1;  // K
  int batch_size = 0;         // 0 = full batch
  Aggregator aggregator = Aggregator::CoreFed;
  std::uint64_t seed = 0;
  UtilityConfig utility;

  void validate(int n_agents) const {
    if (total_rounds < 0) throw InvalidParams("RoundConfig: total_rounds must be >= 0");
    if (local_epochs < 1) throw InvalidParams("RoundConfig: local_epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw InvalidParams("RoundConfig: learning_rate must be > 0");
    if (clients_per_round < 1 || clients_per_round > n_agents)
      throw InvalidK("RoundConfig: clients_per_round must lie in [1, n_agents]");
    if (batch_size < 0) throw InvalidParams("RoundConfig: batch_size must be >= 0");
    utility.validate();
  }
};

struct ClientUpdate {
  int agent_id = 0;
  Eigen::VectorXd delta;    // flat, theta_bar - theta_t
  double start_loss = 0.0;  // L_s at the incoming theta_t
  int sample_count = 0;
};

struct RoundRecord {
  int round = 0;
  std::vector<int> selected;
  std::vector<double> losses;     // per agent, at start-of-round theta
  std::vector<double> utilities;  // per agent, at start-of-round theta
  Aggregator aggregator = Aggregator::CoreFed;
  double objective = 0.0;  // Nash welfare at start-of-round theta
  std::string checkpoint;  // optional reference filled by persistence layers
};

using TrainingTrace = std::vector<RoundRecord>;

// Uniform K-subset of agents, deterministic in (seed, round), ascending ids.
inline std::vector<int> select_clients(int n_agents, int k, int round, std::uint64_t seed) {
  if (k < 1 || k > n_agents) throw InvalidK("select_clients: K must lie in [1, n_agents]");
  if (k == n_agents) {
    std::vector<int> all(static_cast<std::size_t>(n_agents));
    for (int i = 0; i < n_agents; ++i) all[static_cast<std::size_t>(i)] = i;
    return all;
  }
  auto eng = rng::make_engine(seed, {0x73656c656374ULL, static_cast<std::uint64_t>(round)});
  return rng::sample_without_replacement(eng, n_agents, k);
}

// E local epochs of gradient descent from theta_t. Mini-batch order is a
// seeded shuffle per (agent, round, epoch). With E = 1 and full batch the
// delta is exactly -eta * grad loss(theta_t).
inline ClientUpdate local_update(const AgentProfile& agent, const ModelSpec& spec,
                                 const Predictor& theta_t, const RoundConfig& cfg,
                                 int round = 0) {
  agent.validate();
  double start_loss = loss(spec, theta_t, agent.dataset);
  // surfaces the utility policy when the cap is violated at theta_t
  utility_of_loss(start_loss, agent.cap, cfg.utility);

  Eigen::VectorXd flat = theta_t.flat();
  const int m = agent.dataset.size();
  const bool full_batch = cfg.batch_size == 0 || cfg.batch_size >= m;
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    if (full_batch) {
      Predictor cur = Predictor::from_flat(spec, flat);
      flat -= cfg.learning_rate * loss_gradient(spec, cur, agent.dataset);
    } else {
      auto eng = rng::make_engine(cfg.seed, {0x626174636814ULL,
                                             static_cast<std::uint64_t>(agent.id),
                                             static_cast<std::uint64_t>(round),
                                             static_cast<std::uint64_t>(epoch)});
      std::vector<int> order(static_cast<std::size_t>(m));
      for (int i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = i;
      for (int i = m - 1; i > 0; --i) {
        auto j = static_cast<int>(eng() % static_cast<std::uint64_t>(i + 1));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
      }
      for (int start = 0; start < m; start += cfg.batch_size) {
        int end = std::min(m, start + cfg.batch_size);
        std::vector<int> batch(order.begin() + start, order.begin() + end);
        LabeledDataset sub = agent.dataset.rows(batch);
        Predictor cur = Predictor::from_flat(spec, flat);
        flat -= cfg.learning_rate * loss_gradient(spec, cur, sub);
      }
    }
  }

  ClientUpdate update;
  update.agent_id = agent.id;
  update.delta = flat - theta_t.flat();
  update.start_loss = start_loss;
  update.sample_count = m;
  return update;
}

namespace detail {

inline const AgentProfile& agent_by_id(const std::vector<AgentProfile>& agents, int id) {
  for (const auto& a : agents)
    if (a.id == id) return a;
  throw InvalidParams("aggregate: no agent with id " + std::to_string(id));
}

}  // namespace detail

inline Predictor aggregate(const ModelSpec& spec, const Predictor& theta_t,
                           std::vector<ClientUpdate> updates,
                           const std::vector<AgentProfile>& agents, Aggregator kind,
                           const UtilityConfig& cfg = {}) {
  if (updates.empty()) throw EmptyRound("aggregate: no client updates");
  std::sort(updates.begin(), updates.end(),
            [](const ClientUpdate& a, const ClientUpdate& b) { return a.agent_id < b.agent_id; });

  Eigen::VectorXd flat = theta_t.flat();
  Eigen::VectorXd total = Eigen::VectorXd::Zero(flat.size());
  if (kind == Aggregator::FedAvg) {
    double n_total = 0.0;
    for (const auto& u : updates) n_total += u.sample_count;
    if (!(n_total > 0.0)) throw EmptyRound("aggregate: zero total sample count");
    for (const auto& u : updates) {
      if (u.delta.size() != flat.size()) throw DimensionMismatch("aggregate: delta dim mismatch");
      total += (u.sample_count / n_total) * u.delta;
    }
    return Predictor::from_flat(spec, flat + total);
  }

  // CoreFed is WeightedCoreFed with unit weights; one code path keeps the
  // two trajectories bit-identical when all weights are 1.
  const bool weighted = kind == Aggregator::WeightedCoreFed;
  double weight_sum = 0.0;
  for (const auto& u : updates)
    weight_sum += weighted ? detail::agent_by_id(agents, u.agent_id).weight : 1.0;
  double mean_weight = weight_sum / static_cast<double>(updates.size());
  for (const auto& u : updates) {
    if (u.delta.size() != flat.size()) throw DimensionMismatch("aggregate: delta dim mismatch");
    const AgentProfile& agent = detail::agent_by_id(agents, u.agent_id);
    double headroom = utility_of_loss(u.start_loss, agent.cap, cfg);  // M_s - L_s
    double w = weighted ? agent.weight : 1.0;
    total += (w / headroom) * u.delta;
  }
  flat += total / (mean_weight * static_cast<double>(updates.size()));
  return Predictor::from_flat(spec, flat);
}

// T rounds of select -> broadcast -> local_update -> aggregate. The trace
// records every agent's loss/utility at the start-of-round theta (server-side
// in simulation, selected or not). Fully deterministic given cfg.seed.
inline std::pair<Predictor, TrainingTrace> run_rounds(const std::vector<AgentProfile>& agents,
                                                      const ModelSpec& spec,
                                                      const RoundConfig& cfg,
                                                      const Predictor& theta_0) {
  cfg.validate(static_cast<int>(agents.size()));
  theta_0.validate(spec);
  // selection works over positions, so ids must be exactly 0..n-1
  for (std::size_t i = 0; i < agents.size(); ++i)
    if (agents[i].id != static_cast<int>(i))
      throw InvalidParams("run_rounds: agent ids must be 0..n-1 in order");
  const bool weights_on = cfg.aggregator == Aggregator::WeightedCoreFed;

  Predictor theta = theta_0;
  TrainingTrace trace;
  trace.reserve(static_cast<std::size_t>(cfg.total_rounds));
  for (int round = 0; round < cfg.total_rounds; ++round) {
    try {
      RoundRecord rec;
      rec.round = round;
      rec.aggregator = cfg.aggregator;
      rec.objective = 0.0;
      for (const auto& agent : agents) {
        double l = loss(spec, theta, agent.dataset);
        double u = utility_of_loss(l, agent.cap, cfg.utility);
        rec.losses.push_back(l);
        rec.utilities.push_back(u);
        rec.objective += (weights_on ? agent.weight : 1.0) * std::log(u);
      }
      rec.selected = select_clients(static_cast<int>(agents.size()), cfg.clients_per_round,
                                    round, cfg.seed);
      std::vector<ClientUpdate> updates;
      updates.reserve(rec.selected.size());
      for (int id : rec.selected)
        updates.push_back(local_update(detail::agent_by_id(agents, id), spec, theta, cfg, round));
      theta = aggregate(spec, theta, std::move(updates), agents, cfg.aggregator, cfg.utility);
      trace.push_back(std::move(rec));
    } catch (const NonPositiveUtility& e) {
      throw NonPositiveUtility("round " + std::to_string(round) + ": " + e.what());
    } catch (const NumericOverflow& e) {
      throw NumericOverflow("round " + std::to_string(round) + ": " + e.what());
    }
  }
  return {std::move(theta), std::move(trace)};
}

}  // namespace corefed
