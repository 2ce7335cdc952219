#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "corefed/audit.hpp"
#include "corefed/data.hpp"
#include "corefed/errors.hpp"
#include "corefed/federation.hpp"
#include "corefed/models.hpp"

// File formats. Traces are line-delimited JSON (one object per round),
// checkpoints are a flat theta array behind a small header, summaries and
// utility matrices are plain CSV. Every format carries schema_version = 1.

namespace corefed::io {

inline constexpr int kSchemaVersion = 1;

using nlohmann::json;

inline std::string format_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::LinReg: return "linreg";
    case ModelKind::LogReg: return "logreg";
    case ModelKind::SmoothMlp: return "smooth-mlp";
    case ModelKind::SimplexToy: return "simplex-toy";
  }
  return "?";
}

inline ModelKind model_kind_from_name(const std::string& name) {
  if (name == "linreg") return ModelKind::LinReg;
  if (name == "logreg") return ModelKind::LogReg;
  if (name == "smooth-mlp") return ModelKind::SmoothMlp;
  if (name == "simplex-toy") return ModelKind::SimplexToy;
  throw ConfigError("unknown model kind '" + name + "'");
}

inline json model_to_json(const ModelSpec& spec) {
  json j;
  j["kind"] = model_kind_name(spec.kind);
  j["input_dim"] = spec.input_dim;
  if (spec.kind == ModelKind::LogReg) j["alpha"] = spec.alpha;
  if (spec.kind == ModelKind::SmoothMlp) j["layer_dims"] = spec.layer_dims;
  if (spec.kind == ModelKind::SimplexToy) j["simplex_n"] = spec.simplex_n;
  return j;
}

inline ModelSpec model_from_json(const json& j) {
  ModelSpec spec;
  spec.kind = model_kind_from_name(j.at("kind").get<std::string>());
  spec.input_dim = j.value("input_dim", 0);
  spec.alpha = j.value("alpha", 1.0);
  spec.layer_dims = j.value("layer_dims", std::vector<int>{});
  spec.simplex_n = j.value("simplex_n", 0);
  spec.validate();
  return spec;
}

inline void write_trace_jsonl(const std::string& path, const TrainingTrace& trace) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write trace to " + path);
  for (const auto& rec : trace) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["round"] = rec.round;
    j["agents"] = rec.selected;
    j["loss"] = rec.losses;
    j["utility"] = rec.utilities;
    j["aggregator"] = aggregator_name(rec.aggregator);
    j["objective"] = rec.objective;
    if (!rec.checkpoint.empty()) j["checkpoint"] = rec.checkpoint;
    out << j.dump() << "\n";
  }
}

inline void save_checkpoint(const std::string& path, const ModelSpec& spec,
                            const Predictor& theta, int round) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["model"] = model_to_json(spec);
  j["round"] = round;
  Eigen::VectorXd flat = theta.flat();
  j["theta"] = std::vector<double>(flat.data(), flat.data() + flat.size());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint to " + path);
  out << j.dump(2) << "\n";
}

inline std::pair<ModelSpec, Predictor> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint " + path);
  json j = json::parse(in);
  ModelSpec spec = model_from_json(j.at("model"));
  std::vector<double> flat = j.at("theta").get<std::vector<double>>();
  Eigen::VectorXd v = Eigen::Map<Eigen::VectorXd>(flat.data(), static_cast<long>(flat.size()));
  return {spec, Predictor::from_flat(spec, v)};
}

// Wide one-row summary: per-agent utilities plus U(Average) and U(Multi).
inline void write_summary_csv(const std::string& path, Aggregator aggregator,
                              std::uint64_t seed, int rounds,
                              const std::vector<double>& utilities) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write summary to " + path);
  out << "schema_version,aggregator,seed,rounds";
  for (std::size_t i = 0; i < utilities.size(); ++i) out << ",u_" << i;
  out << ",u_average,u_multi\n";
  double mean = 0.0;
  double product = 1.0;
  for (double u : utilities) {
    mean += u;
    product *= u;
  }
  mean /= static_cast<double>(utilities.size());
  out << kSchemaVersion << "," << aggregator_name(aggregator) << "," << seed << "," << rounds;
  for (double u : utilities) out << "," << format_full(u);
  out << "," << format_full(mean) << "," << format_full(product) << "\n";
}

struct RunSummary {
  std::string aggregator;
  std::uint64_t seed = 0;
  int rounds = 0;
  std::vector<double> utilities;
  double u_average = 0.0;
  double u_multi = 0.0;
};

inline RunSummary load_summary_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open summary " + path);
  std::string header, row;
  if (!std::getline(in, header) || !std::getline(in, row))
    throw MalformedRow("summary " + path + " needs a header and one data row");
  auto cols = corefed::detail::split_csv_row(header);
  auto cells = corefed::detail::split_csv_row(row);
  if (cols.size() != cells.size()) throw MalformedRow("summary " + path + " is ragged");
  RunSummary s;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (cols[c] == "aggregator") s.aggregator = cells[c];
    else if (cols[c] == "seed") s.seed = std::stoull(cells[c]);
    else if (cols[c] == "rounds") s.rounds = std::stoi(cells[c]);
    else if (cols[c] == "u_average") s.u_average = std::stod(cells[c]);
    else if (cols[c] == "u_multi") s.u_multi = std::stod(cells[c]);
    else if (cols[c].rfind("u_", 0) == 0) s.utilities.push_back(std::stod(cells[c]));
  }
  if (s.utilities.empty()) throw MalformedRow("summary " + path + " has no per-agent utilities");
  return s;
}

// Per-agent dataset CSV: feature columns x0..x{d-1}, target column y.
inline void write_dataset_csv(const std::string& path, const LabeledDataset& data) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write dataset to " + path);
  for (int j = 0; j < data.dim(); ++j) out << "x" << j << ",";
  out << "y\n";
  for (int i = 0; i < data.size(); ++i) {
    for (int j = 0; j < data.dim(); ++j) out << format_full(data.features(i, j)) << ",";
    out << format_full(data.targets(i)) << "\n";
  }
}

// Utility matrix CSV: header names the candidate columns, rows are agents;
// an optional leading `weight` column carries per-agent weights.
struct NamedUtilityMatrix {
  UtilityMatrix matrix;
  std::vector<std::string> candidate_names;
};

inline NamedUtilityMatrix load_utility_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open utility matrix " + path);
  std::string line;
  if (!std::getline(in, line)) throw MalformedRow("utility matrix " + path + " missing header");
  auto header = corefed::detail::split_csv_row(line);
  bool has_weights = !header.empty() && header.front() == "weight";
  std::size_t first_col = has_weights ? 1 : 0;
  if (header.size() <= first_col)
    throw MalformedRow("utility matrix " + path + " has no candidate columns");

  std::vector<std::vector<double>> rows;
  std::vector<double> weights;
  int row_index = 1;
  while (std::getline(in, line)) {
    ++row_index;
    if (line.empty() || line == "\r") continue;
    auto cells = corefed::detail::split_csv_row(line);
    if (cells.size() != header.size())
      throw MalformedRow("utility matrix row " + std::to_string(row_index) + " is ragged");
    std::vector<double> row;
    for (std::size_t c = first_col; c < cells.size(); ++c) {
      double v;
      if (!corefed::detail::parse_double(cells[c], v))
        throw MalformedRow("utility matrix row " + std::to_string(row_index) +
                           ": non-numeric cell '" + cells[c] + "'");
      row.push_back(v);
    }
    if (has_weights) {
      double w;
      if (!corefed::detail::parse_double(cells[0], w))
        throw MalformedRow("utility matrix row " + std::to_string(row_index) +
                           ": non-numeric weight");
      weights.push_back(w);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw EmptyDataset("utility matrix " + path + " has no rows");

  NamedUtilityMatrix out;
  out.candidate_names.assign(header.begin() + static_cast<long>(first_col), header.end());
  out.matrix.values.resize(static_cast<long>(rows.size()), static_cast<long>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      out.matrix.values(static_cast<long>(r), static_cast<long>(c)) = rows[r][c];
  if (has_weights)
    out.matrix.weights =
        Eigen::Map<Eigen::VectorXd>(weights.data(), static_cast<long>(weights.size()));
  out.matrix.validate();
  return out;
}

}  // namespace corefed::io
