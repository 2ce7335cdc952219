#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "corefed/errors.hpp"

// Predictor families: linear regression, L2-regularized logistic regression,
// a smooth (softplus) multilayer perceptron with softmax cross-entropy, and
// the simplex toy instance with per-agent linear utility u_i(c) = c_i.
//
// Losses are means over the local dataset; the logistic L2 term is applied
// once per dataset. All gradients are analytic and flat over
// (params, intercept), matching central finite differences to 1e-5.

namespace corefed {

enum class ModelKind { LinReg, LogReg, SmoothMlp, SimplexToy };

struct ModelSpec {
  ModelKind kind = ModelKind::LinReg;
  int input_dim = 0;
  double alpha = 1.0;               // LogReg: weight of the mean log-loss term
  std::vector<int> layer_dims;      // SmoothMlp: layer sizes after the input
  int simplex_n = 0;                // SimplexToy: simplex dimension

  static ModelSpec lin_reg(int input_dim) {
    ModelSpec s;
    s.kind = ModelKind::LinReg;
    s.input_dim = input_dim;
    s.validate();
    return s;
  }

  static ModelSpec log_reg(int input_dim, double alpha = 1.0) {
    ModelSpec s;
    s.kind = ModelKind::LogReg;
    s.input_dim = input_dim;
    s.alpha = alpha;
    s.validate();
    return s;
  }

  static ModelSpec smooth_mlp(int input_dim, std::vector<int> layer_dims) {
    ModelSpec s;
    s.kind = ModelKind::SmoothMlp;
    s.input_dim = input_dim;
    s.layer_dims = std::move(layer_dims);
    s.validate();
    return s;
  }

  static ModelSpec simplex_toy(int n) {
    ModelSpec s;
    s.kind = ModelKind::SimplexToy;
    s.input_dim = 0;
    s.simplex_n = n;
    s.validate();
    return s;
  }

  bool has_intercept() const { return kind == ModelKind::LogReg; }

  // Number of weight coordinates excluding the scalar intercept.
  int weight_dim() const {
    switch (kind) {
      case ModelKind::LinReg:
      case ModelKind::LogReg:
        return input_dim;
      case ModelKind::SimplexToy:
        return simplex_n;
      case ModelKind::SmoothMlp: {
        int total = 0;
        int prev = input_dim;
        for (int d : layer_dims) {
          total += prev * d + d;
          prev = d;
        }
        return total;
      }
    }
    return 0;
  }

  // Flat parameter dimension, intercept included.
  int param_dim() const { return weight_dim() + (has_intercept() ? 1 : 0); }

  int output_dim() const {
    switch (kind) {
      case ModelKind::LinReg:
      case ModelKind::LogReg:
        return 1;
      case ModelKind::SmoothMlp:
        return layer_dims.back();
      case ModelKind::SimplexToy:
        return 0;
    }
    return 0;
  }

  void validate() const {
    switch (kind) {
      case ModelKind::LinReg:
        if (input_dim < 1) throw InvalidShape("LinReg: input_dim must be >= 1");
        break;
      case ModelKind::LogReg:
        if (input_dim < 1) throw InvalidShape("LogReg: input_dim must be >= 1");
        if (!(alpha >= 0.0)) throw InvalidParams("LogReg: alpha must be >= 0");
        break;
      case ModelKind::SmoothMlp:
        if (input_dim < 1) throw InvalidShape("SmoothMlp: input_dim must be >= 1");
        // at least one hidden layer plus the output layer
        if (layer_dims.size() < 2)
          throw InvalidShape("SmoothMlp: needs >= 1 hidden layer before the output layer");
        for (int d : layer_dims)
          if (d < 1) throw InvalidShape("SmoothMlp: layer sizes must be >= 1");
        if (layer_dims.back() < 2)
          throw InvalidShape("SmoothMlp: output layer needs >= 2 classes");
        break;
      case ModelKind::SimplexToy:
        if (simplex_n < 1) throw InvalidShape("SimplexToy: n must be >= 1");
        break;
    }
  }
};

struct Predictor {
  Eigen::VectorXd params;
  std::optional<double> intercept;

  // Concatenated (params, intercept) vector; the layout the solver and the
  // federation protocol operate on.
  Eigen::VectorXd flat() const {
    if (!intercept) return params;
    Eigen::VectorXd v(params.size() + 1);
    v.head(params.size()) = params;
    v(params.size()) = *intercept;
    return v;
  }

  static Predictor from_flat(const ModelSpec& spec, const Eigen::VectorXd& v) {
    if (v.size() != spec.param_dim())
      throw DimensionMismatch("Predictor::from_flat: flat size " + std::to_string(v.size()) +
                              " != param_dim " + std::to_string(spec.param_dim()));
    Predictor p;
    if (spec.has_intercept()) {
      p.params = v.head(v.size() - 1);
      p.intercept = v(v.size() - 1);
    } else {
      p.params = v;
    }
    return p;
  }

  static Predictor zeros(const ModelSpec& spec) {
    return from_flat(spec, Eigen::VectorXd::Zero(spec.param_dim()));
  }

  void validate(const ModelSpec& spec) const {
    if (params.size() != spec.weight_dim())
      throw DimensionMismatch("Predictor: params size " + std::to_string(params.size()) +
                              " != weight_dim " + std::to_string(spec.weight_dim()));
    if (spec.has_intercept() != intercept.has_value())
      throw DimensionMismatch("Predictor: intercept presence does not match model kind");
    if (!params.allFinite() || (intercept && !std::isfinite(*intercept)))
      throw InvalidShape("Predictor: non-finite entries");
  }
};

struct LabeledDataset {
  Eigen::MatrixXd features;  // rows = samples, columns = input_dim
  Eigen::VectorXd targets;

  int size() const { return static_cast<int>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }

  void validate() const {
    if (features.rows() != targets.size())
      throw InvalidShape("LabeledDataset: feature rows != target count");
    if (!features.allFinite() || !targets.allFinite())
      throw InvalidShape("LabeledDataset: non-finite values");
  }

  LabeledDataset rows(const std::vector<int>& idx) const {
    LabeledDataset out;
    out.features.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
    out.targets.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      out.features.row(static_cast<Eigen::Index>(r)) = features.row(idx[r]);
      out.targets(static_cast<Eigen::Index>(r)) = targets(idx[r]);
    }
    return out;
  }
};

// SimplexToy agents carry no samples; the dataset encodes the agent's
// coordinate index as the target of a single row.
inline LabeledDataset simplex_agent_dataset(int agent_index) {
  LabeledDataset ds;
  ds.features.resize(1, 0);
  ds.targets.resize(1);
  ds.targets(0) = agent_index;
  return ds;
}

namespace detail {

// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

inline void check_logreg_targets(const LabeledDataset& data) {
  for (int i = 0; i < data.size(); ++i) {
    double y = data.targets(i);
    if (y != 1.0 && y != -1.0)
      throw InvalidShape("LogReg: targets must be in {-1, +1}, got " + std::to_string(y) +
                         " at row " + std::to_string(i));
  }
}

inline int simplex_agent_index(const ModelSpec& spec, const LabeledDataset& data) {
  if (data.size() < 1) throw EmptyDataset("SimplexToy: dataset must carry the agent index");
  double raw = data.targets(0);
  int i = static_cast<int>(raw);
  if (static_cast<double>(i) != raw || i < 0 || i >= spec.simplex_n)
    throw InvalidShape("SimplexToy: agent index out of range");
  return i;
}

inline int class_label(const ModelSpec& spec, double raw, int row) {
  int y = static_cast<int>(raw);
  if (static_cast<double>(y) != raw || y < 0 || y >= spec.output_dim())
    throw InvalidShape("SmoothMlp: label out of range at row " + std::to_string(row));
  return y;
}

// Views into the flat SmoothMlp parameter block: weights then bias per layer.
struct MlpLayout {
  std::vector<Eigen::Map<const Eigen::MatrixXd>> weights;
  std::vector<Eigen::Map<const Eigen::VectorXd>> biases;
};

inline MlpLayout map_mlp(const ModelSpec& spec, const Eigen::VectorXd& flat) {
  MlpLayout layout;
  const double* ptr = flat.data();
  int prev = spec.input_dim;
  for (int d : spec.layer_dims) {
    layout.weights.emplace_back(ptr, prev, d);
    ptr += prev * d;
    layout.biases.emplace_back(ptr, d);
    ptr += d;
    prev = d;
  }
  return layout;
}

// Forward pass with softplus hidden activations; returns pre-activation
// layer inputs when caching for backprop.
inline Eigen::VectorXd mlp_forward(const ModelSpec& spec, const Eigen::VectorXd& flat,
                                   const Eigen::VectorXd& x,
                                   std::vector<Eigen::VectorXd>* pre_acts = nullptr,
                                   std::vector<Eigen::VectorXd>* activations = nullptr) {
  MlpLayout layout = map_mlp(spec, flat);
  Eigen::VectorXd a = x;
  if (activations) activations->push_back(a);
  const std::size_t n_layers = layout.weights.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    Eigen::VectorXd z = layout.weights[l].transpose() * a + layout.biases[l];
    if (pre_acts) pre_acts->push_back(z);
    if (l + 1 < n_layers) {
      a = z.unaryExpr([](double v) { return softplus(v); });
    } else {
      a = z;  // output layer is linear; scores feed the softmax loss
    }
    if (activations) activations->push_back(a);
  }
  return a;
}

// Cross-entropy of one stabilized softmax row; grad_scores filled with
// softmax(scores) - onehot(label) when requested.
inline double softmax_xent(const Eigen::VectorXd& scores, int label,
                           Eigen::VectorXd* grad_scores = nullptr) {
  double zmax = scores.maxCoeff();
  Eigen::VectorXd shifted = (scores.array() - zmax).exp();
  double denom = shifted.sum();
  double loss = std::log(denom) - (scores(label) - zmax);
  if (grad_scores) {
    *grad_scores = shifted / denom;
    (*grad_scores)(label) -= 1.0;
  }
  return loss;
}

}  // namespace detail

// Per-sample prediction: LinReg score, LogReg probability, SmoothMlp class
// scores. SimplexToy has no per-sample prediction.
inline Eigen::VectorXd predict(const ModelSpec& spec, const Predictor& theta,
                               const Eigen::VectorXd& x) {
  spec.validate();
  theta.validate(spec);
  if (spec.kind == ModelKind::SimplexToy)
    throw UnsupportedForKind("predict: SimplexToy has no per-sample prediction");
  if (x.size() != spec.input_dim)
    throw DimensionMismatch("predict: x has dim " + std::to_string(x.size()) + ", expected " +
                            std::to_string(spec.input_dim));
  Eigen::VectorXd out;
  switch (spec.kind) {
    case ModelKind::LinReg:
      out.resize(1);
      out(0) = theta.params.dot(x);
      break;
    case ModelKind::LogReg:
      out.resize(1);
      out(0) = detail::sigmoid(theta.params.dot(x) + *theta.intercept);
      break;
    case ModelKind::SmoothMlp:
      out = detail::mlp_forward(spec, theta.flat(), x);
      break;
    case ModelKind::SimplexToy:
      break;
  }
  return out;
}

// Mean loss over the dataset. LinReg: squared error. LogReg:
// ||theta||^2/2 + alpha * mean log(1 + exp(-y(theta.x + c))), labels in
// {-1,+1}. SmoothMlp: mean softmax cross-entropy. SimplexToy: 1 - theta_i
// for the agent index carried by the dataset.
inline double loss(const ModelSpec& spec, const Predictor& theta, const LabeledDataset& data) {
  spec.validate();
  theta.validate(spec);
  data.validate();
  if (data.size() == 0) throw EmptyDataset("loss: empty dataset");

  double value = 0.0;
  switch (spec.kind) {
    case ModelKind::LinReg: {
      if (data.dim() != spec.input_dim) throw DimensionMismatch("loss: feature dim mismatch");
      Eigen::VectorXd residual = data.features * theta.params - data.targets;
      value = residual.squaredNorm() / data.size();
      break;
    }
    case ModelKind::LogReg: {
      if (data.dim() != spec.input_dim) throw DimensionMismatch("loss: feature dim mismatch");
      detail::check_logreg_targets(data);
      Eigen::VectorXd z = data.features * theta.params;
      z.array() += *theta.intercept;
      double mean_log = 0.0;
      for (int i = 0; i < data.size(); ++i)
        mean_log += detail::softplus(-data.targets(i) * z(i));
      mean_log /= data.size();
      value = 0.5 * theta.params.squaredNorm() + spec.alpha * mean_log;
      break;
    }
    case ModelKind::SmoothMlp: {
      if (data.dim() != spec.input_dim) throw DimensionMismatch("loss: feature dim mismatch");
      Eigen::VectorXd flat = theta.flat();
      for (int i = 0; i < data.size(); ++i) {
        Eigen::VectorXd scores = detail::mlp_forward(spec, flat, data.features.row(i).transpose());
        value += detail::softmax_xent(scores, detail::class_label(spec, data.targets(i), i));
      }
      value /= data.size();
      break;
    }
    case ModelKind::SimplexToy:
      value = 1.0 - theta.params(detail::simplex_agent_index(spec, data));
      break;
  }
  if (!std::isfinite(value)) throw NumericOverflow("loss: non-finite value");
  return value;
}

// Analytic gradient of loss over the flat (params, intercept) layout.
inline Eigen::VectorXd loss_gradient(const ModelSpec& spec, const Predictor& theta,
                                     const LabeledDataset& data) {
  spec.validate();
  theta.validate(spec);
  data.validate();
  if (data.size() == 0) throw EmptyDataset("loss_gradient: empty dataset");

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(spec.param_dim());
  switch (spec.kind) {
    case ModelKind::LinReg: {
      if (data.dim() != spec.input_dim)
        throw DimensionMismatch("loss_gradient: feature dim mismatch");
      Eigen::VectorXd residual = data.features * theta.params - data.targets;
      grad = 2.0 * (data.features.transpose() * residual) / data.size();
      break;
    }
    case ModelKind::LogReg: {
      if (data.dim() != spec.input_dim)
        throw DimensionMismatch("loss_gradient: feature dim mismatch");
      detail::check_logreg_targets(data);
      Eigen::VectorXd z = data.features * theta.params;
      z.array() += *theta.intercept;
      Eigen::VectorXd coef(data.size());  // -y * sigmoid(-y z) per sample
      for (int i = 0; i < data.size(); ++i)
        coef(i) = -data.targets(i) * detail::sigmoid(-data.targets(i) * z(i));
      grad.head(spec.input_dim) =
          theta.params + spec.alpha * (data.features.transpose() * coef) / data.size();
      grad(spec.input_dim) = spec.alpha * coef.mean();
      break;
    }
    case ModelKind::SmoothMlp: {
      if (data.dim() != spec.input_dim)
        throw DimensionMismatch("loss_gradient: feature dim mismatch");
      Eigen::VectorXd flat = theta.flat();
      detail::MlpLayout layout = detail::map_mlp(spec, flat);
      const std::size_t n_layers = layout.weights.size();
      for (int i = 0; i < data.size(); ++i) {
        std::vector<Eigen::VectorXd> pre, act;
        Eigen::VectorXd scores =
            detail::mlp_forward(spec, flat, data.features.row(i).transpose(), &pre, &act);
        Eigen::VectorXd delta;
        detail::softmax_xent(scores, detail::class_label(spec, data.targets(i), i), &delta);
        // backprop through linear output and softplus hidden layers
        double* gptr = grad.data();
        std::vector<Eigen::Map<Eigen::MatrixXd>> gw;
        std::vector<Eigen::Map<Eigen::VectorXd>> gb;
        int prev = spec.input_dim;
        for (int d : spec.layer_dims) {
          gw.emplace_back(gptr, prev, d);
          gptr += prev * d;
          gb.emplace_back(gptr, d);
          gptr += d;
          prev = d;
        }
        for (std::size_t l = n_layers; l-- > 0;) {
          gw[l] += act[l] * delta.transpose();
          gb[l] += delta;
          if (l > 0) {
            Eigen::VectorXd dsp =
                pre[l - 1].unaryExpr([](double v) { return detail::sigmoid(v); });
            delta = (layout.weights[l] * delta).cwiseProduct(dsp);
          }
        }
      }
      grad /= data.size();
      break;
    }
    case ModelKind::SimplexToy:
      grad(detail::simplex_agent_index(spec, data)) = -1.0;
      break;
  }
  if (!grad.allFinite()) throw NumericOverflow("loss_gradient: non-finite value");
  return grad;
}

// Central-difference Hessian-vector product of the loss along v, with the
// step scaled to ||theta||. Error is O(h^2).
inline Eigen::VectorXd hvp_estimate(const ModelSpec& spec, const Predictor& theta,
                                    const LabeledDataset& data, const Eigen::VectorXd& v) {
  spec.validate();
  theta.validate(spec);
  if (v.size() != spec.param_dim())
    throw DimensionMismatch("hvp_estimate: direction dim mismatch");
  double vnorm = v.norm();
  if (vnorm < 1e-14) throw DegenerateDirection("hvp_estimate: direction has zero norm");

  Eigen::VectorXd flat = theta.flat();
  const double h = std::cbrt(std::numeric_limits<double>::epsilon()) *
                   (1.0 + flat.norm()) / vnorm;
  Eigen::VectorXd gp = loss_gradient(spec, Predictor::from_flat(spec, flat + h * v), data);
  Eigen::VectorXd gm = loss_gradient(spec, Predictor::from_flat(spec, flat - h * v), data);
  return (gp - gm) / (2.0 * h);
}

}  // namespace corefed
