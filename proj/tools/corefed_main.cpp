// corefed: batch front end for the federated fairness toolkit.
//
//   corefed generate -c run.json                  write per-agent datasets
//   corefed train    -c run.json [--aggregator]   run the round protocol
//   corefed audit    --ref DIR --alt DIR ...      certificate report
//   corefed audit    --matrix m.csv [--ref-col]   discrete-candidate audit
//   corefed report   --ref DIR --alt DIR          summary table
//
// Exit codes: 0 success, 2 config/input error, 3 utility-cap violation,
// 4 solver non-convergence (oracle mode), 1 unexpected failure.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "corefed/corefed.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace corefed;

namespace {

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

// json::value with a field-path diagnostic on type errors.
template <typename T>
T field_or(const json& j, const std::string& section, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("field " + (section.empty() ? key : section + "." + key) +
                      " has the wrong type");
  }
}

template <typename T>
T field_required(const json& j, const std::string& section, const std::string& key) {
  if (!j.contains(key))
    throw ConfigError("field " + (section.empty() ? key : section + "." + key) + " is required");
  return field_or<T>(j, section, key, T{});
}

struct RunSpec {
  std::uint64_t seed = 0;
  fs::path out;
  ModelSpec model;
  json data;
  int n_agents = 0;
  double dirichlet_alpha = 0.0;
  bool strict_partition = false;
  std::vector<double> noise_sigmas;
  std::vector<double> weights;
  json utility;
  json train;
  json solver;
};

RunSpec parse_runspec(const std::string& path) {
  json j = load_json_file(path);
  RunSpec spec;
  spec.seed = field_or<std::uint64_t>(j, "", "seed", 0);
  spec.out = field_or<std::string>(j, "", "out", "runs/out");

  if (!j.contains("model")) throw ConfigError("field model is required");
  try {
    spec.model = io::model_from_json(j.at("model"));
  } catch (const Error& e) {
    throw ConfigError(std::string("field model: ") + e.what());
  }

  spec.data = j.value("data", json::object());
  json partition = j.value("partition", json::object());
  spec.n_agents = field_or<int>(partition, "partition", "n_agents", 1);
  if (spec.n_agents < 1) throw ConfigError("field partition.n_agents must be >= 1");
  spec.dirichlet_alpha = field_or<double>(partition, "partition", "dirichlet_alpha", 1.0);
  if (!(spec.dirichlet_alpha > 0.0))
    throw ConfigError("field partition.dirichlet_alpha must be > 0");
  spec.strict_partition = field_or<bool>(partition, "partition", "strict", false);

  json noise = j.value("noise", json::object());
  spec.noise_sigmas = field_or<std::vector<double>>(noise, "noise", "sigmas", {});
  if (!spec.noise_sigmas.empty() &&
      spec.noise_sigmas.size() != static_cast<std::size_t>(spec.n_agents))
    throw ConfigError("field noise.sigmas must have one entry per agent");
  try {
    NoiseConfig{spec.noise_sigmas}.validate();
  } catch (const InvalidParams&) {
    throw ConfigError("field noise.sigmas entries must be finite and >= 0");
  }

  spec.weights = field_or<std::vector<double>>(j, "", "weights", {});
  if (!spec.weights.empty() && spec.weights.size() != static_cast<std::size_t>(spec.n_agents))
    throw ConfigError("field weights must have one entry per agent");
  for (double w : spec.weights)
    if (!(w > 0.0)) throw ConfigError("field weights entries must be > 0");

  spec.utility = j.value("utility", json::object());
  spec.train = j.value("train", json::object());
  spec.solver = j.value("solver", json::object());
  return spec;
}

UtilityConfig utility_config(const RunSpec& spec) {
  UtilityConfig cfg;
  cfg.epsilon = field_or<double>(spec.utility, "utility", "epsilon", 1e-6);
  std::string policy = field_or<std::string>(spec.utility, "utility", "on_violation", "error");
  if (policy == "error") cfg.on_violation = ViolationPolicy::Error;
  else if (policy == "auto-rescale") cfg.on_violation = ViolationPolicy::AutoRescale;
  else throw ConfigError("field utility.on_violation must be error|auto-rescale");
  cfg.validate();
  return cfg;
}

Aggregator aggregator_from_name(const std::string& name) {
  if (name == "fedavg") return Aggregator::FedAvg;
  if (name == "corefed") return Aggregator::CoreFed;
  if (name == "weighted-corefed") return Aggregator::WeightedCoreFed;
  throw ConfigError("aggregator must be fedavg|corefed|weighted-corefed, got '" + name + "'");
}

SolverConfig solver_config(const RunSpec& spec) {
  SolverConfig cfg;
  cfg.max_iters = field_or<int>(spec.solver, "solver", "max_iters", 20000);
  cfg.grad_tol = field_or<double>(spec.solver, "solver", "grad_tol",
                                  spec.model.kind == ModelKind::SmoothMlp ? 1e-4 : 1e-8);
  cfg.domain_radius = field_or<double>(spec.solver, "solver", "domain_radius", 1e3);
  cfg.seed = spec.seed;
  cfg.utility = utility_config(spec);
  cfg.validate();
  return cfg;
}

// The source pool before partitioning: synthetic (classification or
// regression) or an external CSV.
LabeledDataset build_pool(const RunSpec& spec) {
  std::string source = field_or<std::string>(spec.data, "data", "source", "classification");
  if (source == "classification") {
    int n = field_or<int>(spec.data, "data", "n", 300);
    int dim = field_or<int>(spec.data, "data", "dim", spec.model.input_dim);
    int classes = field_or<int>(spec.data, "data", "n_classes", 2);
    double separation = field_or<double>(spec.data, "data", "separation", 2.0);
    LabeledDataset pool = gen_synthetic_classification(n, dim, classes, separation, spec.seed);
    if (spec.model.kind == ModelKind::LogReg) pool = as_signed_binary(pool);
    return pool;
  }
  if (source == "regression") {
    int n = field_or<int>(spec.data, "data", "n", 300);
    int dim = field_or<int>(spec.data, "data", "dim", spec.model.input_dim);
    double sigma = field_or<double>(spec.data, "data", "noise_sigma", 0.1);
    auto coeffs = field_or<std::vector<double>>(spec.data, "data", "true_theta", {});
    Eigen::VectorXd theta;
    if (coeffs.empty()) {
      auto eng = rng::make_engine(spec.seed, {0x74727574ULL});
      theta.resize(dim);
      for (int i = 0; i < dim; ++i) theta(i) = rng::normal(eng);
    } else {
      if (coeffs.size() != static_cast<std::size_t>(dim))
        throw ConfigError("field data.true_theta must have data.dim entries");
      theta = Eigen::Map<Eigen::VectorXd>(coeffs.data(), static_cast<long>(coeffs.size()));
    }
    return gen_synthetic_regression(n, dim, theta, sigma, spec.seed);
  }
  if (source == "csv") {
    std::string path = field_required<std::string>(spec.data, "data", "path");
    std::string target = field_required<std::string>(spec.data, "data", "target_column");
    bool normalize = field_or<bool>(spec.data, "data", "normalize", false);
    return load_csv(path, target, normalize, spec.model.kind == ModelKind::LogReg);
  }
  throw ConfigError("field data.source must be classification|regression|csv");
}

std::string agent_file(int i) { return "agent_" + std::to_string(i) + ".csv"; }

int cmd_generate(const RunSpec& spec) {
  fs::path data_dir = spec.out / "data";
  fs::create_directories(data_dir);

  // SimplexToy agents are index datasets, one per agent; nothing to split.
  if (spec.model.kind == ModelKind::SimplexToy) {
    if (spec.n_agents != spec.model.simplex_n)
      throw ConfigError("field partition.n_agents must equal model.simplex_n");
    json manifest;
    manifest["schema_version"] = io::kSchemaVersion;
    manifest["seed"] = spec.seed;
    manifest["n_agents"] = spec.n_agents;
    std::vector<std::string> files;
    for (int a = 0; a < spec.n_agents; ++a) {
      io::write_dataset_csv((data_dir / agent_file(a)).string(), simplex_agent_dataset(a));
      files.push_back(agent_file(a));
    }
    manifest["files"] = files;
    manifest["sizes"] = std::vector<int>(static_cast<std::size_t>(spec.n_agents), 1);
    std::ofstream out(data_dir / "partition_manifest.json");
    out << manifest.dump(2) << "\n";
    std::cout << "wrote " << spec.n_agents << " agent datasets to " << data_dir.string() << "\n";
    return 0;
  }

  LabeledDataset pool = build_pool(spec);
  auto [plan, shards] = dirichlet_partition(pool, spec.n_agents, spec.dirichlet_alpha,
                                            spec.seed, spec.strict_partition);
  for (int a = 0; a < spec.n_agents; ++a) {
    LabeledDataset shard = shards[static_cast<std::size_t>(a)];
    if (!spec.noise_sigmas.empty())
      shard = add_gaussian_noise(shard, spec.noise_sigmas[static_cast<std::size_t>(a)],
                                 spec.seed + static_cast<std::uint64_t>(a));
    io::write_dataset_csv((data_dir / agent_file(a)).string(), shard);
  }

  json manifest;
  manifest["schema_version"] = io::kSchemaVersion;
  manifest["seed"] = spec.seed;
  manifest["n_agents"] = spec.n_agents;
  manifest["dirichlet_alpha"] = spec.dirichlet_alpha;
  manifest["label_values"] = plan.label_values;
  std::vector<int> sizes;
  std::vector<std::string> files;
  for (int a = 0; a < spec.n_agents; ++a) {
    sizes.push_back(shards[static_cast<std::size_t>(a)].size());
    files.push_back(agent_file(a));
  }
  manifest["sizes"] = sizes;
  manifest["files"] = files;
  auto matrix_to_json = [](const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      rows.emplace_back(m.row(r).begin(), m.row(r).end());
    return rows;
  };
  manifest["per_agent_label_proportions"] = matrix_to_json(plan.per_agent_label_proportions);
  manifest["dirichlet_draws"] = matrix_to_json(plan.dirichlet_draws);
  if (!spec.noise_sigmas.empty()) manifest["noise_sigmas"] = spec.noise_sigmas;

  std::ofstream out(data_dir / "partition_manifest.json");
  out << manifest.dump(2) << "\n";
  std::cout << "wrote " << spec.n_agents << " agent datasets to " << data_dir.string() << "\n";
  return 0;
}

std::vector<AgentProfile> load_agents(const RunSpec& spec, const fs::path& data_dir) {
  std::vector<AgentProfile> agents;
  for (int a = 0; a < spec.n_agents; ++a) {
    fs::path file = data_dir / agent_file(a);
    if (!fs::exists(file))
      throw ConfigError("dataset " + file.string() + " not found; run `corefed generate` first");
    AgentProfile agent;
    agent.id = a;
    agent.dataset = load_csv(file.string(), "y");
    agent.weight = spec.weights.empty() ? 1.0 : spec.weights[static_cast<std::size_t>(a)];
    agents.push_back(std::move(agent));
  }
  return agents;
}

// Caps come from the config (single number or per-agent list) or from
// probe-based calibration ("auto", the default).
void resolve_caps(const RunSpec& spec, std::vector<AgentProfile>& agents) {
  const json caps = spec.utility.contains("caps") ? spec.utility.at("caps") : json("auto");
  if (caps.is_string()) {
    if (caps.get<std::string>() != "auto")
      throw ConfigError("field utility.caps must be 'auto', a number, or a per-agent list");
    double safety = field_or<double>(spec.utility, "utility", "safety_factor", 1.5);
    auto eng = rng::make_engine(spec.seed, {0x63617073ULL});
    std::vector<Predictor> probes{Predictor::zeros(spec.model)};
    for (int p = 0; p < 4; ++p) {
      Eigen::VectorXd v(spec.model.param_dim());
      for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng::normal(eng);
      if (spec.model.kind == ModelKind::SimplexToy) v = project_simplex(v);
      probes.push_back(Predictor::from_flat(spec.model, v));
    }
    auto values = calibrate_caps(spec.model, agents, probes, safety);
    for (std::size_t a = 0; a < agents.size(); ++a) agents[a].cap = values[a];
    return;
  }
  if (caps.is_number()) {
    for (auto& agent : agents) agent.cap = caps.get<double>();
    return;
  }
  if (caps.is_array()) {
    auto values = caps.get<std::vector<double>>();
    if (values.size() != agents.size())
      throw ConfigError("field utility.caps list must have one entry per agent");
    for (std::size_t a = 0; a < agents.size(); ++a) agents[a].cap = values[a];
    return;
  }
  throw ConfigError("field utility.caps must be 'auto', a number, or a per-agent list");
}

void write_run_meta(const fs::path& dir, const RunSpec& spec,
                    const std::vector<AgentProfile>& agents, const std::string& aggregator,
                    const std::string& mode, const fs::path& data_dir) {
  json meta;
  meta["schema_version"] = io::kSchemaVersion;
  meta["aggregator"] = aggregator;
  meta["mode"] = mode;
  meta["seed"] = spec.seed;
  meta["model"] = io::model_to_json(spec.model);
  meta["data_dir"] = data_dir.string();
  std::vector<double> caps, weights;
  for (const auto& a : agents) {
    caps.push_back(a.cap);
    weights.push_back(a.weight);
  }
  meta["caps"] = caps;
  meta["weights"] = weights;
  std::ofstream out(dir / "run_meta.json");
  out << meta.dump(2) << "\n";
}

int cmd_train(const RunSpec& spec, const std::string& aggregator_override,
              const std::string& data_override, const std::string& out_override) {
  std::string aggregator_str =
      !aggregator_override.empty()
          ? aggregator_override
          : field_or<std::string>(spec.train, "train", "aggregator", "corefed");
  Aggregator aggregator = aggregator_from_name(aggregator_str);
  std::string mode = field_or<std::string>(spec.train, "train", "mode", "federated");
  if (mode != "federated" && mode != "oracle")
    throw ConfigError("field train.mode must be federated|oracle");

  fs::path data_dir = data_override.empty() ? spec.out / "data" : fs::path(data_override);
  fs::path out_dir = out_override.empty() ? spec.out / aggregator_str : fs::path(out_override);
  fs::create_directories(out_dir);

  auto agents = load_agents(spec, data_dir);
  resolve_caps(spec, agents);

  Predictor theta = Predictor::zeros(spec.model);
  TrainingTrace trace;
  int rounds = 0;
  if (mode == "federated") {
    RoundConfig cfg;
    cfg.total_rounds = field_or<int>(spec.train, "train", "rounds", 50);
    cfg.local_epochs = field_or<int>(spec.train, "train", "epochs", 1);
    cfg.learning_rate = field_or<double>(spec.train, "train", "learning_rate", 0.1);
    cfg.clients_per_round =
        field_or<int>(spec.train, "train", "clients_per_round", spec.n_agents);
    cfg.batch_size = field_or<int>(spec.train, "train", "batch_size", 0);
    cfg.aggregator = aggregator;
    cfg.seed = spec.seed;
    cfg.utility = utility_config(spec);
    if (spec.model.kind == ModelKind::SimplexToy)
      theta = project(spec.model, theta, 1.0);  // start feasible on the simplex
    auto [final_theta, run_trace] = run_rounds(agents, spec.model, cfg, theta);
    theta = final_theta;
    trace = std::move(run_trace);
    rounds = cfg.total_rounds;
  } else {
    auto result = maximize_nash(agents, spec.model, solver_config(spec),
                                aggregator == Aggregator::WeightedCoreFed);
    if (!result.converged) {
      std::cerr << "oracle did not converge: residual " << result.grad_norm << " after "
                << result.iterations << " iterations\n";
      return 4;
    }
    theta = result.theta_star;
  }

  io::save_checkpoint((out_dir / "checkpoint.json").string(), spec.model, theta, rounds);
  io::write_trace_jsonl((out_dir / "trace.jsonl").string(), trace);
  auto utilities = agent_utilities(spec.model, theta, agents, utility_config(spec));
  io::write_summary_csv((out_dir / "summary.csv").string(), aggregator, spec.seed, rounds,
                        utilities);
  write_run_meta(out_dir, spec, agents, aggregator_str, mode, data_dir);
  std::cout << "trained " << aggregator_str << " for " << rounds << " rounds; artifacts in "
            << out_dir.string() << "\n";
  return 0;
}

std::string round2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// "2.80 (<3)" style verdict column.
std::string verdict_cell(double ratio, double threshold) {
  std::string op = ratio <= threshold ? "<" : ">=";
  std::string bound = threshold == std::floor(threshold)
                          ? std::to_string(static_cast<long long>(threshold))
                          : round2(threshold);
  return round2(ratio) + " (" + op + bound + ")";
}

int cmd_audit_runs(const RunSpec& spec, const fs::path& ref_dir, const fs::path& alt_dir,
                   const std::string& data_override, const std::string& out_override,
                   bool proportionality, bool pseudo_core, double pc_k, double pc_radius,
                   int pc_probes) {
  json ref_meta = load_json_file((ref_dir / "run_meta.json").string());
  json alt_meta = load_json_file((alt_dir / "run_meta.json").string());
  auto ref_caps = ref_meta.at("caps").get<std::vector<double>>();
  auto alt_caps = alt_meta.at("caps").get<std::vector<double>>();
  if (ref_caps.size() != alt_caps.size() || ref_caps != alt_caps)
    throw ConfigError("audit: the two runs disagree on agents or caps");

  fs::path data_dir = data_override.empty()
                          ? fs::path(ref_meta.at("data_dir").get<std::string>())
                          : fs::path(data_override);
  auto agents = load_agents(spec, data_dir);
  if (agents.size() != ref_caps.size())
    throw ConfigError("audit: agent count does not match the runs");
  for (std::size_t a = 0; a < agents.size(); ++a) agents[a].cap = ref_caps[a];

  auto [ref_model, ref_theta] = io::load_checkpoint((ref_dir / "checkpoint.json").string());
  auto [alt_model, alt_theta] = io::load_checkpoint((alt_dir / "checkpoint.json").string());
  (void)alt_model;

  UtilityConfig ucfg = utility_config(spec);
  auto u_ref_v = agent_utilities(ref_model, ref_theta, agents, ucfg);
  auto u_alt_v = agent_utilities(ref_model, alt_theta, agents, ucfg);
  Eigen::VectorXd u_ref =
      Eigen::Map<Eigen::VectorXd>(u_ref_v.data(), static_cast<long>(u_ref_v.size()));
  Eigen::VectorXd u_alt =
      Eigen::Map<Eigen::VectorXd>(u_alt_v.data(), static_cast<long>(u_alt_v.size()));
  Eigen::VectorXd w(static_cast<Eigen::Index>(agents.size()));
  for (std::size_t a = 0; a < agents.size(); ++a)
    w(static_cast<Eigen::Index>(a)) = agents[a].weight;

  auto cert = core_ratio(u_ref, u_alt, w);

  json report;
  report["schema_version"] = io::kSchemaVersion;
  report["ref"] = ref_dir.string();
  report["alt"] = alt_dir.string();
  report["utilities_ref"] = u_ref_v;
  report["utilities_alt"] = u_alt_v;
  report["ratio_sum"] = cert.ratio_sum;
  report["threshold"] = cert.threshold;
  report["holds"] = cert.holds;
  report["verdict"] = verdict_cell(cert.ratio_sum, cert.threshold);
  report["pareto"] = {{"alt_dominates_ref", check_pareto_dominated(u_ref, u_alt)},
                      {"ref_dominates_alt", check_pareto_dominated(u_alt, u_ref)}};

  std::ostringstream text;
  text << "core certificate: sum_i w_i u_i(alt)/u_i(ref) = " << cert.ratio_sum << "\n";
  text << "verdict: " << verdict_cell(cert.ratio_sum, cert.threshold)
       << (cert.holds ? "  [holds]" : "  [VIOLATED]") << "\n";

  if (proportionality) {
    SolverConfig scfg = solver_config(spec);
    Eigen::VectorXd u_best(static_cast<Eigen::Index>(agents.size()));
    bool solved_all = true;
    for (std::size_t a = 0; a < agents.size(); ++a) {
      auto best = maximize_agent_utility(agents[a], ref_model, scfg);
      solved_all = solved_all && best.converged;
      u_best(static_cast<Eigen::Index>(a)) = best.objective;
    }
    auto verdicts = check_proportionality(u_ref, u_best, w);
    report["proportionality"] = {{"u_best", std::vector<double>(u_best.begin(), u_best.end())},
                                 {"verdicts", verdicts},
                                 {"solver_converged", solved_all}};
    text << "proportionality:";
    for (std::size_t a = 0; a < verdicts.size(); ++a)
      text << " agent" << a << "=" << (verdicts[a] ? "pass" : "FAIL");
    text << "\n";
  }

  if (pseudo_core) {
    SolverConfig scfg = solver_config(spec);
    double beta = estimate_beta(ref_model, ref_theta, agents, pc_radius, pc_probes, spec.seed);
    double eps = fixed_point_residual(ref_model, ref_theta, agents, scfg, false);
    report["fixed_point"] = {{"residual", eps},
                             {"grad_tol", scfg.grad_tol},
                             {"approximate_fixed_point", eps <= scfg.grad_tol}};
    text << "fixed-point residual: " << eps
         << (eps <= scfg.grad_tol ? "  [approximate fixed point of the best-response map]"
                                  : "  [not stationary at grad_tol]")
         << "\n";
    PseudoCoreParams params;
    params.beta = std::max(beta, 1e-12);
    params.grad_norm_eps = eps;
    params.k = pc_k;
    params.n = static_cast<int>(agents.size());
    params.utilities = u_ref;
    double d = pseudo_core_radius(params);
    bool radius_consistent = d <= pc_radius;
    report["pseudo_core"] = {{"beta_lower_bound", beta},
                             {"beta_probes", pc_probes},
                             {"grad_norm_eps", eps},
                             {"k", pc_k},
                             {"probe_radius", pc_radius},
                             {"d", d},
                             {"d_within_probed_radius", radius_consistent}};
    text << "pseudo-core: d = " << d << " with k = " << pc_k << ", beta >= " << beta << " ("
         << pc_probes << " probes)";
    if (!radius_consistent)
      text << "  [warning: d exceeds the probed radius " << pc_radius
           << "; re-estimate beta on a larger ball]";
    text << "\n";
  }

  fs::path out_dir = out_override.empty() ? ref_dir / "audit" : fs::path(out_override);
  fs::create_directories(out_dir);
  std::ofstream jout(out_dir / "report.json");
  jout << report.dump(2) << "\n";
  std::ofstream tout(out_dir / "report.txt");
  tout << text.str();
  std::cout << text.str();
  return 0;
}

int cmd_audit_matrix(const std::string& matrix_path, int ref_col,
                     const std::string& out_override) {
  auto named = io::load_utility_matrix_csv(matrix_path);
  const auto& m = named.matrix;
  if (ref_col < 0 || ref_col >= m.n_candidates())
    throw ConfigError("--ref-col out of range for " + matrix_path);

  json report;
  report["schema_version"] = io::kSchemaVersion;
  report["matrix"] = matrix_path;
  report["ref"] = named.candidate_names[static_cast<std::size_t>(ref_col)];

  std::ostringstream text;
  Eigen::VectorXd w = m.effective_weights();
  json per_candidate = json::array();
  for (int c = 0; c < m.n_candidates(); ++c) {
    if (c == ref_col) continue;
    auto cert = core_ratio(m.values.col(ref_col), m.values.col(c), w);
    per_candidate.push_back({{"candidate", named.candidate_names[static_cast<std::size_t>(c)]},
                             {"ratio_sum", cert.ratio_sum},
                             {"threshold", cert.threshold},
                             {"holds", cert.holds},
                             {"verdict", verdict_cell(cert.ratio_sum, cert.threshold)}});
    text << named.candidate_names[static_cast<std::size_t>(c)] << ": "
         << verdict_cell(cert.ratio_sum, cert.threshold) << "\n";
  }
  report["certificates"] = per_candidate;

  auto witness = find_blocking_coalition(m, ref_col);
  if (witness) {
    report["witness"] = {
        {"coalition", witness->coalition},
        {"candidate", named.candidate_names[static_cast<std::size_t>(witness->candidate)]}};
    text << "witness coalition {";
    for (std::size_t i = 0; i < witness->coalition.size(); ++i)
      text << (i ? "," : "") << witness->coalition[i];
    text << "} prefers " << named.candidate_names[static_cast<std::size_t>(witness->candidate)]
         << "\n";
  } else {
    report["witness"] = nullptr;
    text << "no blocking coalition\n";
  }

  if (!out_override.empty()) {
    fs::create_directories(out_override);
    std::ofstream jout(fs::path(out_override) / "report.json");
    jout << report.dump(2) << "\n";
    std::ofstream tout(fs::path(out_override) / "report.txt");
    tout << text.str();
  }
  std::cout << text.str();
  return 0;
}

// Table-1 style comparison of two run summaries. The ratio column compares
// the alt row against the ref row from stored full-precision utilities.
int cmd_report(const fs::path& ref_dir, const fs::path& alt_dir,
               const std::string& out_override) {
  auto ref = io::load_summary_csv((ref_dir / "summary.csv").string());
  auto alt = io::load_summary_csv((alt_dir / "summary.csv").string());
  if (ref.utilities.size() != alt.utilities.size())
    throw ConfigError("report: the two runs disagree on the agent count");
  const auto n = ref.utilities.size();

  double ratio = 0.0;
  for (std::size_t a = 0; a < n; ++a) ratio += alt.utilities[a] / ref.utilities[a];

  std::ostringstream text;
  text << "method";
  for (std::size_t a = 0; a < n; ++a) text << "\tagent_" << a;
  text << "\tU(Average)\tU(Multi)\tsum u'/u*\n";
  text << alt.aggregator;
  for (double u : alt.utilities) text << "\t" << round2(u);
  text << "\t" << round2(alt.u_average) << "\t" << round2(alt.u_multi) << "\t"
       << verdict_cell(ratio, static_cast<double>(n)) << "\n";
  text << ref.aggregator;
  for (double u : ref.utilities) text << "\t" << round2(u);
  text << "\t" << round2(ref.u_average) << "\t" << round2(ref.u_multi) << "\t\n";
  std::cout << text.str();

  fs::path out_dir = out_override.empty() ? ref_dir / "report" : fs::path(out_override);
  fs::create_directories(out_dir);
  std::ofstream tout(out_dir / "table.txt");
  tout << text.str();
  // full-precision CSV alongside the rounded table
  std::ofstream csv(out_dir / "table.csv");
  csv << "schema_version,method";
  for (std::size_t a = 0; a < n; ++a) csv << ",u_" << a;
  csv << ",u_average,u_multi,ratio_sum\n";
  csv << io::kSchemaVersion << "," << alt.aggregator;
  for (double u : alt.utilities) csv << "," << io::format_full(u);
  csv << "," << io::format_full(alt.u_average) << "," << io::format_full(alt.u_multi) << ","
      << io::format_full(ratio) << "\n";
  csv << io::kSchemaVersion << "," << ref.aggregator;
  for (double u : ref.utilities) csv << "," << io::format_full(u);
  csv << "," << io::format_full(ref.u_average) << "," << io::format_full(ref.u_multi) << ",\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"corefed: federated training with core-stable fairness auditing"};
  app.require_subcommand(1);

  std::string config_path, out_override, data_override, aggregator_override;
  std::optional<std::uint64_t> seed_override;

  auto add_common = [&](CLI::App* cmd, bool config_required) {
    auto* opt = cmd->add_option("-c,--config", config_path, "run spec (JSON)");
    if (config_required) opt->required();
    cmd->add_option("--out", out_override, "output directory override");
    cmd->add_option("--seed", seed_override, "seed override");
  };

  auto* generate = app.add_subcommand("generate", "write per-agent datasets and a manifest");
  add_common(generate, true);

  auto* train = app.add_subcommand("train", "run federated rounds (or the centralized oracle)");
  add_common(train, true);
  train->add_option("--aggregator", aggregator_override,
                    "fedavg|corefed|weighted-corefed (overrides config)");
  train->add_option("--data", data_override, "directory with generated agent datasets");

  std::string ref_dir, alt_dir, matrix_path;
  int ref_col = 0;
  bool proportionality = false, pseudo_core = false;
  double pc_k = 2.0, pc_radius = 1.0;
  int pc_probes = 200;
  auto* audit = app.add_subcommand("audit", "certificate report for two runs or a matrix");
  add_common(audit, false);
  audit->add_option("--ref", ref_dir, "reference run directory (core-stable candidate)");
  audit->add_option("--alt", alt_dir, "alternative run directory");
  audit->add_option("--data", data_override, "directory with generated agent datasets");
  audit->add_option("--matrix", matrix_path, "utility matrix CSV (discrete audit mode)");
  audit->add_option("--ref-col", ref_col, "reference column index in matrix mode");
  audit->add_flag("--proportionality", proportionality,
                  "solve per-agent optima and check proportionality");
  audit->add_flag("--pseudo-core", pseudo_core,
                  "estimate beta and report the pseudo-core radius");
  audit->add_option("--pc-k", pc_k, "pseudo-core relaxation factor k > 1");
  audit->add_option("--pc-radius", pc_radius, "ball radius for beta probing");
  audit->add_option("--pc-probes", pc_probes, "number of beta probe pairs");

  std::string report_ref, report_alt;
  auto* report = app.add_subcommand("report", "render a summary table from two runs");
  report->add_option("--ref", report_ref, "reference run directory")->required();
  report->add_option("--alt", report_alt, "alternative run directory")->required();
  report->add_option("--out", out_override, "output directory override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help lands here with code 0; anything else is a usage/config error
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (generate->parsed() || train->parsed() || (audit->parsed() && matrix_path.empty())) {
      if (config_path.empty())
        throw ConfigError("this audit mode needs -c/--config (or pass --matrix)");
      RunSpec spec = parse_runspec(config_path);
      if (seed_override) spec.seed = *seed_override;
      if (generate->parsed()) {
        if (!out_override.empty()) spec.out = out_override;
        return cmd_generate(spec);
      }
      if (train->parsed())
        return cmd_train(spec, aggregator_override, data_override, out_override);
      if (ref_dir.empty() || alt_dir.empty())
        throw ConfigError("audit needs either --matrix or both --ref and --alt");
      return cmd_audit_runs(spec, ref_dir, alt_dir, data_override, out_override,
                            proportionality, pseudo_core, pc_k, pc_radius, pc_probes);
    }
    if (audit->parsed()) return cmd_audit_matrix(matrix_path, ref_col, out_override);
    if (report->parsed()) return cmd_report(report_ref, report_alt, out_override);
  } catch (const NonPositiveUtility& e) {
    std::cerr << "utility violation: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected failure: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
