#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include "corefed/errors.hpp"
#include "corefed/models.hpp"

// Utilities u_i = M_i - loss_i, cap calibration, and the Nash-welfare
// objective sum_i w_i log u_i with its gradient
// sum_i w_i (-grad loss_i) / (M_i - loss_i).

namespace corefed {

enum class ViolationPolicy { Error, AutoRescale };

struct UtilityConfig {
  double epsilon = 1e-6;  // utilities below M * epsilon count as degenerate
  ViolationPolicy on_violation = ViolationPolicy::Error;

  void validate() const {
    if (!(epsilon > 0.0) || !(epsilon < 1e-5))
      throw InvalidParams("UtilityConfig: epsilon must lie in (0, 1e-5)");
  }
};

struct AgentProfile {
  int id = 0;
  LabeledDataset dataset;
  double cap = 0.0;     // M_i; 0 means "not calibrated yet"
  double weight = 1.0;  // w_i > 0

  void validate() const {
    dataset.validate();
    if (!(weight > 0.0)) throw InvalidParams("AgentProfile: weight must be > 0");
  }
};

// u = M - loss, kept above M * epsilon. On violation either throws or
// rescales the cap to (1+eps) * loss / (1-eps) for this evaluation.
inline double utility_of_loss(double loss_value, double cap, const UtilityConfig& cfg = {}) {
  cfg.validate();
  if (!(cap > 0.0)) throw InvalidParams("utility_of_loss: cap must be > 0");
  double u = cap - loss_value;
  if (u >= cap * cfg.epsilon) return u;
  if (cfg.on_violation == ViolationPolicy::Error)
    throw NonPositiveUtility("utility_of_loss: loss " + std::to_string(loss_value) +
                             " reached cap " + std::to_string(cap));
  double rescaled = (1.0 + cfg.epsilon) * loss_value / (1.0 - cfg.epsilon);
  std::cerr << "corefed: warning: cap " << cap << " raised to " << rescaled
            << " (loss " << loss_value << "); the objective changed mid-run\n";
  return rescaled - loss_value;
}

inline double agent_utility(const ModelSpec& spec, const Predictor& theta,
                            const AgentProfile& agent, const UtilityConfig& cfg = {}) {
  return utility_of_loss(loss(spec, theta, agent.dataset), agent.cap, cfg);
}

inline std::vector<double> agent_utilities(const ModelSpec& spec, const Predictor& theta,
                                           const std::vector<AgentProfile>& agents,
                                           const UtilityConfig& cfg = {}) {
  std::vector<double> out;
  out.reserve(agents.size());
  for (const auto& agent : agents) out.push_back(agent_utility(spec, theta, agent, cfg));
  return out;
}

// Probe-based cap calibration: M_i = safety_factor * max probe loss of agent
// i, floored at 1.0 when every probe loss is zero. A user-supplied positive
// cap is never decreased.
inline std::vector<double> calibrate_caps(const ModelSpec& spec,
                                          const std::vector<AgentProfile>& agents,
                                          const std::vector<Predictor>& probe_thetas,
                                          double safety_factor = 1.5) {
  if (probe_thetas.empty()) throw EmptyProbeSet("calibrate_caps: need >= 1 probe predictor");
  if (!(safety_factor > 1.0))
    throw InvalidParams("calibrate_caps: safety factor must exceed 1");
  std::vector<double> caps;
  caps.reserve(agents.size());
  for (const auto& agent : agents) {
    double worst = 0.0;
    for (const auto& probe : probe_thetas)
      worst = std::max(worst, loss(spec, probe, agent.dataset));
    double cap = worst > 0.0 ? safety_factor * worst : 1.0;
    if (agent.cap > 0.0) cap = std::max(cap, agent.cap);
    caps.push_back(cap);
  }
  return caps;
}

// sum_i w_i log u_i(theta), with w_i = 1 when weights are off. log_offsets,
// when given, add per-agent constants to the log terms; they shift the
// objective without touching its gradient (the scale-invariance hook).
inline double nash_welfare(const ModelSpec& spec, const Predictor& theta,
                           const std::vector<AgentProfile>& agents,
                           const UtilityConfig& cfg = {}, bool weights_on = false,
                           const std::vector<double>& log_offsets = {}) {
  if (!log_offsets.empty() && log_offsets.size() != agents.size())
    throw LengthMismatch("nash_welfare: log_offsets size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    double u = agent_utility(spec, theta, agents[i], cfg);
    double w = weights_on ? agents[i].weight : 1.0;
    total += w * std::log(u);
    if (!log_offsets.empty()) total += log_offsets[i];
  }
  return total;
}

// Gradient of nash_welfare over the flat parameter layout:
// sum_i w_i (-grad loss_i(theta)) / (M_i - loss_i(theta)).
inline Eigen::VectorXd nash_gradient(const ModelSpec& spec, const Predictor& theta,
                                     const std::vector<AgentProfile>& agents,
                                     const UtilityConfig& cfg = {}, bool weights_on = false) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(spec.param_dim());
  for (const auto& agent : agents) {
    double u = agent_utility(spec, theta, agent, cfg);
    double w = weights_on ? agent.weight : 1.0;
    grad -= (w / u) * loss_gradient(spec, theta, agent.dataset);
  }
  return grad;
}

}  // namespace corefed
