#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "corefed/errors.hpp"
#include "corefed/models.hpp"
#include "corefed/rng.hpp"

// Synthetic dataset generation, non-IID Dirichlet label partitioning with
// largest-remainder rounding, Gaussian feature noise, and CSV ingestion.
// Every generator is a pure function of (arguments, seed).

namespace corefed {

struct PartitionPlan {
  std::vector<int> assignments;  // per-sample agent id
  // Realized label mix per agent: rows = agents, columns = labels, rows of
  // non-empty agents sum to 1.
  Eigen::MatrixXd per_agent_label_proportions;
  // Dirichlet draws used for the split: rows = labels, columns = agents.
  Eigen::MatrixXd dirichlet_draws;
  std::vector<double> label_values;  // column order of the label axis
};

struct NoiseConfig {
  std::vector<double> sigmas;  // per-agent, >= 0

  void validate() const {
    for (double s : sigmas)
      if (!(s >= 0.0) || !std::isfinite(s))
        throw InvalidParams("NoiseConfig: sigmas must be finite and >= 0");
  }
};

inline LabeledDataset gen_synthetic_regression(int n, int dim, const Eigen::VectorXd& true_theta,
                                               double noise_sigma, std::uint64_t seed) {
  if (n < 1 || dim < 1) throw InvalidShape("gen_synthetic_regression: n and dim must be >= 1");
  if (true_theta.size() != dim)
    throw InvalidShape("gen_synthetic_regression: true_theta size != dim");
  if (!(noise_sigma >= 0.0)) throw InvalidParams("gen_synthetic_regression: sigma must be >= 0");

  auto eng = rng::make_engine(seed, {0x7265677265737ULL});
  LabeledDataset ds;
  ds.features.resize(n, dim);
  ds.targets.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) ds.features(i, j) = rng::normal(eng);
    double noise = noise_sigma > 0.0 ? noise_sigma * rng::normal(eng) : 0.0;
    ds.targets(i) = ds.features.row(i).dot(true_theta) + noise;
  }
  return ds;
}

// Gaussian class clusters; cluster means are `separation` apart along cycled
// coordinate axes, labels balanced up to rounding (label = i mod n_classes).
inline LabeledDataset gen_synthetic_classification(int n, int dim, int n_classes,
                                                   double separation, std::uint64_t seed) {
  if (n < 1 || dim < 1) throw InvalidShape("gen_synthetic_classification: n, dim must be >= 1");
  if (n_classes < 2) throw InvalidShape("gen_synthetic_classification: n_classes must be >= 2");

  auto eng = rng::make_engine(seed, {0x636c617373ULL});
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(n_classes, dim);
  for (int k = 0; k < n_classes; ++k)
    means(k, k % dim) += separation * (1 + k / dim);

  LabeledDataset ds;
  ds.features.resize(n, dim);
  ds.targets.resize(n);
  for (int i = 0; i < n; ++i) {
    int label = i % n_classes;
    for (int j = 0; j < dim; ++j) ds.features(i, j) = means(label, j) + rng::normal(eng);
    ds.targets(i) = label;
  }
  return ds;
}

// Maps a two-label dataset onto {-1,+1} targets (smaller label -> -1).
inline LabeledDataset as_signed_binary(const LabeledDataset& data) {
  std::set<double> labels(data.targets.begin(), data.targets.end());
  if (labels.size() != 2)
    throw NonBinaryTarget("as_signed_binary: expected exactly 2 labels, got " +
                          std::to_string(labels.size()));
  double lo = *labels.begin();
  LabeledDataset out = data;
  for (int i = 0; i < out.size(); ++i) out.targets(i) = out.targets(i) == lo ? -1.0 : 1.0;
  return out;
}

namespace detail {

// Largest-remainder rounding of m * proportions into integer counts that
// sum to m exactly; ties go to the lower index.
inline std::vector<int> largest_remainder_counts(const std::vector<double>& proportions, int m) {
  const int n = static_cast<int>(proportions.size());
  std::vector<int> counts(proportions.size());
  std::vector<std::pair<double, int>> remainders;  // (-fraction, index)
  int assigned = 0;
  for (int a = 0; a < n; ++a) {
    double exact = proportions[static_cast<std::size_t>(a)] * m;
    counts[static_cast<std::size_t>(a)] = static_cast<int>(std::floor(exact));
    assigned += counts[static_cast<std::size_t>(a)];
    remainders.emplace_back(-(exact - std::floor(exact)), a);
  }
  std::sort(remainders.begin(), remainders.end());
  for (int r = 0; r < m - assigned; ++r)
    counts[static_cast<std::size_t>(remainders[static_cast<std::size_t>(r)].second)] += 1;
  return counts;
}

}  // namespace detail

// For each label, draws an n_agents Dirichlet(alpha) proportion vector and
// assigns that label's samples (in dataset order) to agents via
// largest-remainder rounding. The per-agent datasets are a disjoint cover of
// the input.
inline std::pair<PartitionPlan, std::vector<LabeledDataset>> dirichlet_partition(
    const LabeledDataset& data, int n_agents, double alpha, std::uint64_t seed,
    bool strict = false) {
  data.validate();
  if (!(alpha > 0.0)) throw InvalidParams("dirichlet_partition: alpha must be > 0");
  if (n_agents < 1) throw InvalidParams("dirichlet_partition: n_agents must be >= 1");

  // label -> sample indices, in ascending label order
  std::map<double, std::vector<int>> by_label;
  for (int i = 0; i < data.size(); ++i) by_label[data.targets(i)].push_back(i);
  const int n_labels = static_cast<int>(by_label.size());

  PartitionPlan plan;
  plan.assignments.assign(static_cast<std::size_t>(data.size()), -1);
  plan.dirichlet_draws.resize(n_labels, n_agents);
  for (const auto& [label, _] : by_label) plan.label_values.push_back(label);

  auto eng = rng::make_engine(seed, {0x646972696368ULL});
  std::vector<std::vector<int>> per_agent_rows(static_cast<std::size_t>(n_agents));
  Eigen::MatrixXd agent_label_counts = Eigen::MatrixXd::Zero(n_agents, n_labels);

  int label_idx = 0;
  for (const auto& [label, rows] : by_label) {
    std::vector<double> proportions = rng::dirichlet(eng, alpha, n_agents);
    for (int a = 0; a < n_agents; ++a) plan.dirichlet_draws(label_idx, a) = proportions[a];
    std::vector<int> counts =
        detail::largest_remainder_counts(proportions, static_cast<int>(rows.size()));
    std::size_t cursor = 0;
    for (int a = 0; a < n_agents; ++a) {
      for (int c = 0; c < counts[static_cast<std::size_t>(a)]; ++c, ++cursor) {
        int row = rows[cursor];
        plan.assignments[static_cast<std::size_t>(row)] = a;
        per_agent_rows[static_cast<std::size_t>(a)].push_back(row);
      }
      agent_label_counts(a, label_idx) += counts[static_cast<std::size_t>(a)];
    }
    ++label_idx;
  }

  plan.per_agent_label_proportions = Eigen::MatrixXd::Zero(n_agents, n_labels);
  std::vector<LabeledDataset> shards;
  shards.reserve(static_cast<std::size_t>(n_agents));
  for (int a = 0; a < n_agents; ++a) {
    auto& rows = per_agent_rows[static_cast<std::size_t>(a)];
    std::sort(rows.begin(), rows.end());
    if (rows.empty() && strict)
      throw AgentWithNoData("dirichlet_partition: agent " + std::to_string(a) +
                            " received zero samples");
    double total = agent_label_counts.row(a).sum();
    if (total > 0.0) plan.per_agent_label_proportions.row(a) = agent_label_counts.row(a) / total;
    shards.push_back(data.rows(rows));
  }
  return {std::move(plan), std::move(shards)};
}

// Adds i.i.d. N(0, sigma^2) noise to every feature; labels untouched.
// sigma = 0 returns the input unchanged.
inline LabeledDataset add_gaussian_noise(const LabeledDataset& data, double sigma,
                                         std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw InvalidParams("add_gaussian_noise: sigma must be >= 0");
  if (sigma == 0.0) return data;
  auto eng = rng::make_engine(seed, {0x6e6f697365ULL});
  LabeledDataset out = data;
  for (int i = 0; i < out.size(); ++i)
    for (int j = 0; j < out.dim(); ++j) out.features(i, j) += sigma * rng::normal(eng);
  return out;
}

namespace detail {

inline std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      cells.push_back(cell);
      cell.clear();
    } else {
      cell.push_back(ch);
    }
  }
  cells.push_back(cell);
  for (auto& c : cells) {
    auto b = c.find_first_not_of(" \t\r");
    auto e = c.find_last_not_of(" \t\r");
    c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
  }
  return cells;
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stod(s, &pos);
  } catch (const std::exception&) {
    return false;
  }
  return pos == s.size();
}

}  // namespace detail

// CSV ingestion: header row required; numeric columns are parsed as-is,
// categorical columns one-hot encoded in sorted category order. Binary
// targets map to {-1,+1} (sorted order: smaller -> -1); K-ary categorical
// targets map to 0..K-1. With normalize, numeric feature columns are
// z-scored (constant columns become 0).
inline LabeledDataset load_csv(const std::string& path, const std::string& target_column,
                               bool normalize = false, bool require_binary_target = false) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw MalformedRow("load_csv: missing header row in " + path);
  std::vector<std::string> header = detail::split_csv_row(line);
  auto target_it = std::find(header.begin(), header.end(), target_column);
  if (target_it == header.end())
    throw MissingColumn("load_csv: no column named '" + target_column + "' in " + path);
  const std::size_t target_idx = static_cast<std::size_t>(target_it - header.begin());
  const std::size_t n_cols = header.size();

  std::vector<std::vector<std::string>> raw;
  int row_index = 1;
  while (std::getline(in, line)) {
    ++row_index;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> cells = detail::split_csv_row(line);
    if (cells.size() != n_cols)
      throw MalformedRow("load_csv: row " + std::to_string(row_index) + " has " +
                         std::to_string(cells.size()) + " cells, expected " +
                         std::to_string(n_cols));
    for (std::size_t c = 0; c < cells.size(); ++c)
      if (cells[c].empty())
        throw MalformedRow("load_csv: row " + std::to_string(row_index) +
                           " has a missing value in column '" + header[c] + "'");
    raw.push_back(std::move(cells));
  }
  if (raw.empty()) throw EmptyDataset("load_csv: " + path + " has no data rows");
  const int n_rows = static_cast<int>(raw.size());

  // Column typing: numeric iff every cell parses as a double.
  std::vector<bool> numeric(n_cols, true);
  for (std::size_t c = 0; c < n_cols; ++c)
    for (const auto& row : raw) {
      double v;
      if (!detail::parse_double(row[c], v)) {
        numeric[c] = false;
        break;
      }
    }

  // Encoded feature layout, in header order.
  struct FeatureColumn {
    std::size_t src;
    bool is_numeric;
    std::vector<std::string> categories;  // sorted, for one-hot columns
  };
  std::vector<FeatureColumn> columns;
  int feature_dim = 0;
  for (std::size_t c = 0; c < n_cols; ++c) {
    if (c == target_idx) continue;
    FeatureColumn col{c, numeric[c], {}};
    if (!numeric[c]) {
      std::set<std::string> cats;
      for (const auto& row : raw) cats.insert(row[c]);
      col.categories.assign(cats.begin(), cats.end());
      feature_dim += static_cast<int>(col.categories.size());
    } else {
      feature_dim += 1;
    }
    columns.push_back(std::move(col));
  }

  LabeledDataset ds;
  ds.features = Eigen::MatrixXd::Zero(n_rows, feature_dim);
  ds.targets.resize(n_rows);

  for (int r = 0; r < n_rows; ++r) {
    int offset = 0;
    for (const auto& col : columns) {
      const std::string& cell = raw[static_cast<std::size_t>(r)][col.src];
      if (col.is_numeric) {
        double v;
        detail::parse_double(cell, v);
        ds.features(r, offset) = v;
        offset += 1;
      } else {
        auto it = std::lower_bound(col.categories.begin(), col.categories.end(), cell);
        ds.features(r, offset + static_cast<int>(it - col.categories.begin())) = 1.0;
        offset += static_cast<int>(col.categories.size());
      }
    }
  }

  // Target encoding.
  if (numeric[target_idx]) {
    for (int r = 0; r < n_rows; ++r)
      detail::parse_double(raw[static_cast<std::size_t>(r)][target_idx], ds.targets(r));
    std::set<double> distinct(ds.targets.begin(), ds.targets.end());
    if (require_binary_target && distinct.size() != 2)
      throw NonBinaryTarget("load_csv: target '" + target_column + "' has " +
                            std::to_string(distinct.size()) + " distinct values, expected 2");
    if (distinct.size() == 2) {
      double lo = *distinct.begin();
      for (int r = 0; r < n_rows; ++r) ds.targets(r) = ds.targets(r) == lo ? -1.0 : 1.0;
    }
  } else {
    std::set<std::string> cats;
    for (const auto& row : raw) cats.insert(row[target_idx]);
    if (require_binary_target && cats.size() != 2)
      throw NonBinaryTarget("load_csv: target '" + target_column + "' has " +
                            std::to_string(cats.size()) + " distinct values, expected 2");
    std::vector<std::string> order(cats.begin(), cats.end());
    for (int r = 0; r < n_rows; ++r) {
      const std::string& cell = raw[static_cast<std::size_t>(r)][target_idx];
      auto it = std::lower_bound(order.begin(), order.end(), cell);
      int code = static_cast<int>(it - order.begin());
      ds.targets(r) = cats.size() == 2 ? (code == 0 ? -1.0 : 1.0) : code;
    }
  }

  if (normalize) {
    int offset = 0;
    for (const auto& col : columns) {
      int width = col.is_numeric ? 1 : static_cast<int>(col.categories.size());
      if (col.is_numeric) {
        double mean = ds.features.col(offset).mean();
        double var = (ds.features.col(offset).array() - mean).square().sum() / n_rows;
        double sd = std::sqrt(var);
        if (sd > 0.0)
          ds.features.col(offset) = (ds.features.col(offset).array() - mean) / sd;
        else
          ds.features.col(offset).setZero();
      }
      offset += width;
    }
  }
  return ds;
}

}  // namespace corefed
