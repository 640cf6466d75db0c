#pragma once

// Class-weighted three-class logistic regression over feature vectors.
//
// Objective, for examples (x_i, y_i) and class weights w_c:
//
//   L(W, b) = sum_i w_{y_i} * (logsumexp(W x_i + b) - (W x_i + b)_{y_i})
//             + (l2 / 2) * ||W||_F^2
//
// minimized by full-batch gradient descent with Armijo backtracking from a
// zero start. The bias is not penalized.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "caa/error.hpp"
#include "caa/features.hpp"
#include "caa/types.hpp"

namespace caa {

inline constexpr int kNumClasses = 3;

using ClassWeights = std::array<double, kNumClasses>;  // Negative, Neutral, Positive

struct TrainOptions {
  double l2 = 1e-4;
  double grad_tol = 1e-6;  // stop when max |gradient| falls below this
  int max_iter = 10000;
  std::uint64_t seed = 0;
  bool record_loss = false;
};

struct TrainingMetadata {
  std::vector<std::string> languages;
  int fold = -1;
  std::uint64_t seed = 0;
  double l2 = 0;
  int iterations = 0;
  bool converged = false;
  double final_loss = 0;
  std::string config_hash;
  std::vector<double> loss_history;  // only with TrainOptions::record_loss
};

struct ConnotationModel {
  Dimension dimension = Dimension::Power;
  Eigen::MatrixXd weights;  // kNumClasses x D
  Eigen::Vector3d bias = Eigen::Vector3d::Zero();
  ClassWeights class_weights{1.0, 1.0, 1.0};
  TrainingMetadata meta;

  std::size_t dim() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t parameter_count() const {
    return static_cast<std::size_t>(weights.size() + bias.size());
  }

  Eigen::Vector3d scores(std::span<const float> x) const {
    if (x.size() != dim())
      throw DataError("feature vector has D=" + std::to_string(x.size()) + ", model expects " +
                      std::to_string(dim()));
    Eigen::VectorXd v(static_cast<Eigen::Index>(x.size()));
    for (std::size_t d = 0; d < x.size(); ++d) v[static_cast<Eigen::Index>(d)] = x[d];
    return weights * v + bias;
  }

  TernaryLabel predict(std::span<const float> x) const;
  std::vector<TernaryLabel> predict(const Eigen::MatrixXd& X) const;
};

/// Index of the largest score; ties go to the lowest index.
inline int argmax_class(const Eigen::Ref<const Eigen::RowVectorXd>& z) {
  int best = 0;
  for (int c = 1; c < z.size(); ++c)
    if (z[c] > z[best]) best = c;
  return best;
}

inline TernaryLabel ConnotationModel::predict(std::span<const float> x) const {
  Eigen::RowVectorXd z = scores(x).transpose();
  return label_from_class(argmax_class(z));
}

inline std::vector<TernaryLabel> ConnotationModel::predict(const Eigen::MatrixXd& X) const {
  if (static_cast<std::size_t>(X.cols()) != dim())
    throw DataError("feature matrix has D=" + std::to_string(X.cols()) + ", model expects " +
                    std::to_string(dim()));
  Eigen::MatrixXd Z = X * weights.transpose();
  Z.rowwise() += bias.transpose();
  std::vector<TernaryLabel> out(static_cast<std::size_t>(Z.rows()));
  for (Eigen::Index i = 0; i < Z.rows(); ++i)
    out[static_cast<std::size_t>(i)] = label_from_class(argmax_class(Z.row(i)));
  return out;
}

struct Objective {
  double value = 0;
  Eigen::MatrixXd grad_weights;
  Eigen::Vector3d grad_bias;
};

/// Loss and gradient of the weighted objective at (W, b).
inline Objective weighted_objective(const Eigen::MatrixXd& W, const Eigen::Vector3d& b,
                                    const Eigen::MatrixXd& X, std::span<const TernaryLabel> y,
                                    const ClassWeights& cw, double l2, bool with_gradient = true) {
  Eigen::MatrixXd Z = X * W.transpose();
  Z.rowwise() += b.transpose();
  Objective obj;
  Eigen::MatrixXd G;
  if (with_gradient) G.resize(Z.rows(), Z.cols());
  double loss = 0;
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    const int yi = class_index(y[static_cast<std::size_t>(i)]);
    const double wi = cw[static_cast<std::size_t>(yi)];
    const double zmax = Z.row(i).maxCoeff();
    const Eigen::Array<double, 1, kNumClasses> e = (Z.row(i).array() - zmax).exp();
    const double sum = e.sum();
    loss += wi * (zmax + std::log(sum) - Z(i, yi));
    if (with_gradient) {
      G.row(i) = (e / sum).matrix();
      G(i, yi) -= 1.0;
      G.row(i) *= wi;
    }
  }
  obj.value = loss + 0.5 * l2 * W.squaredNorm();
  if (with_gradient) {
    obj.grad_weights = G.transpose() * X + l2 * W;
    obj.grad_bias = G.colwise().sum().transpose();
  }
  return obj;
}

/// Fits a model. Every class must occur in `y`.
inline ConnotationModel train(const Eigen::MatrixXd& X, std::span<const TernaryLabel> y,
                              const ClassWeights& class_weights, const TrainOptions& opt = {},
                              Dimension dimension = Dimension::Power) {
  if (static_cast<std::size_t>(X.rows()) != y.size())
    throw DataError("feature rows and labels differ in count");
  for (double w : class_weights)
    if (!(w > 0) || !std::isfinite(w)) throw DataError("class weights must be positive");
  std::array<std::size_t, kNumClasses> counts{};
  for (auto l : y) ++counts[static_cast<std::size_t>(class_index(l))];
  for (int c = 0; c < kNumClasses; ++c)
    if (counts[static_cast<std::size_t>(c)] == 0)
      throw DataError("class '" + std::string(to_string(label_from_class(c))) +
                      "' is absent from the training data");

  ConnotationModel model;
  model.dimension = dimension;
  model.class_weights = class_weights;
  model.weights = Eigen::MatrixXd::Zero(kNumClasses, X.cols());
  model.bias.setZero();
  model.meta.seed = opt.seed;
  model.meta.l2 = opt.l2;

  auto obj = weighted_objective(model.weights, model.bias, X, y, class_weights, opt.l2);
  if (!std::isfinite(obj.value)) throw DataError("non-finite training loss");
  if (opt.record_loss) model.meta.loss_history.push_back(obj.value);

  constexpr double kArmijo = 1e-4;
  double step = 1.0;
  int iter = 0;
  for (; iter < opt.max_iter; ++iter) {
    const double gmax = std::max(obj.grad_weights.cwiseAbs().maxCoeff(), obj.grad_bias.cwiseAbs().maxCoeff());
    if (gmax < opt.grad_tol) {
      model.meta.converged = true;
      break;
    }
    const double gsq = obj.grad_weights.squaredNorm() + obj.grad_bias.squaredNorm();
    double t = step * 2.0;
    Eigen::MatrixXd W_next;
    Eigen::Vector3d b_next;
    double next_value = 0;
    while (true) {
      W_next = model.weights - t * obj.grad_weights;
      b_next = model.bias - t * obj.grad_bias;
      next_value = weighted_objective(W_next, b_next, X, y, class_weights, opt.l2, false).value;
      if (std::isfinite(next_value) && next_value < obj.value && next_value <= obj.value - kArmijo * t * gsq) break;
      t *= 0.5;
      if (t < 1e-30) break;
    }
    if (t < 1e-30) break;  // stalled: no representable decrease
    step = t;
    model.weights = std::move(W_next);
    model.bias = b_next;
    obj = weighted_objective(model.weights, model.bias, X, y, class_weights, opt.l2);
    if (!std::isfinite(obj.value)) throw DataError("non-finite training loss");
    if (opt.record_loss) model.meta.loss_history.push_back(obj.value);
  }
  model.meta.iterations = iter;
  model.meta.final_loss = obj.value;
  return model;
}

// ---------------------------------------------------------------------------
// Metrics

struct ClassMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t support = 0;  // gold count
};

struct ClassificationReport {
  std::array<ClassMetrics, kNumClasses> per_class{};
  double macro_f1 = 0;
};

/// Per-class precision/recall/F1 and their unweighted macro average over all
/// three classes. Undefined ratios are 0, so a class absent from both gold
/// and predictions contributes F1 = 0.
inline ClassificationReport classification_report(std::span<const TernaryLabel> predicted,
                                                  std::span<const TernaryLabel> gold) {
  if (predicted.size() != gold.size()) throw DataError("predictions and gold differ in length");
  if (gold.empty()) throw DataError("macro-F1 of an empty sample");
  std::array<std::size_t, kNumClasses> tp{}, fp{}, fn{};
  for (std::size_t i = 0; i < gold.size(); ++i) {
    auto p = static_cast<std::size_t>(class_index(predicted[i]));
    auto g = static_cast<std::size_t>(class_index(gold[i]));
    if (p == g) {
      ++tp[p];
    } else {
      ++fp[p];
      ++fn[g];
    }
  }
  ClassificationReport r;
  double sum = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    auto& m = r.per_class[c];
    m.support = tp[c] + fn[c];
    m.precision = tp[c] + fp[c] ? static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fp[c]) : 0.0;
    m.recall = tp[c] + fn[c] ? static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fn[c]) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    sum += m.f1;
  }
  r.macro_f1 = sum / kNumClasses;
  return r;
}

inline double macro_f1(std::span<const TernaryLabel> predicted, std::span<const TernaryLabel> gold) {
  return classification_report(predicted, gold).macro_f1;
}

/// Macro-F1 of always predicting the most frequent gold label (ties: lowest class).
inline double majority_baseline_macro_f1(std::span<const TernaryLabel> gold) {
  std::array<std::size_t, kNumClasses> counts{};
  for (auto g : gold) ++counts[static_cast<std::size_t>(class_index(g))];
  int best = 0;
  for (int c = 1; c < kNumClasses; ++c)
    if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(best)]) best = c;
  std::vector<TernaryLabel> pred(gold.size(), label_from_class(best));
  return macro_f1(pred, gold);
}

// ---------------------------------------------------------------------------
// Class-weight grid search

inline std::vector<ClassWeights> default_weight_grid() {
  static constexpr double values[] = {0.5, 1.0, 2.0, 4.0};
  std::vector<ClassWeights> grid;
  for (double a : values)
    for (double b : values)
      for (double c : values) grid.push_back({a, b, c});
  return grid;
}

struct GridSearchResult {
  ClassWeights best{1.0, 1.0, 1.0};
  double best_f1 = -1.0;
  std::vector<std::pair<ClassWeights, double>> scores;  // in grid order
};

/// Trains one model per grid triple and keeps the triple with the highest
/// dev macro-F1; equal scores go to the lexicographically smaller triple.
inline GridSearchResult grid_search_class_weights(const Eigen::MatrixXd& X_train,
                                                  std::span<const TernaryLabel> y_train,
                                                  const Eigen::MatrixXd& X_dev,
                                                  std::span<const TernaryLabel> y_dev,
                                                  const std::vector<ClassWeights>& grid,
                                                  const TrainOptions& opt = {}) {
  if (grid.empty()) throw DataError("class-weight grid is empty");
  GridSearchResult r;
  bool first = true;
  for (const auto& cw : grid) {
    auto model = train(X_train, y_train, cw, opt);
    double f1 = macro_f1(model.predict(X_dev), y_dev);
    r.scores.emplace_back(cw, f1);
    if (first || f1 > r.best_f1 || (f1 == r.best_f1 && cw < r.best)) {
      r.best = cw;
      r.best_f1 = f1;
      first = false;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Serialization: one line of JSON, then the parameters as little-endian
// float64, weights row-major (class by class) followed by the bias.

inline void write_model(const ConnotationModel& m, std::ostream& out) {
  nlohmann::ordered_json h;
  h["format"] = "caa-model/1";
  h["dimension"] = to_string(m.dimension);
  h["dim"] = m.dim();
  h["classes"] = {"negative", "neutral", "positive"};
  h["n_parameters"] = m.parameter_count();
  h["class_weights"] = m.class_weights;
  h["l2"] = m.meta.l2;
  h["seed"] = m.meta.seed;
  h["languages"] = m.meta.languages;
  h["fold"] = m.meta.fold;
  h["iterations"] = m.meta.iterations;
  h["converged"] = m.meta.converged;
  h["final_loss"] = m.meta.final_loss;
  h["config_hash"] = m.meta.config_hash;
  out << h.dump() << '\n';
  auto put = [&](double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((bits >> (8 * k)) & 0xFF);
    out.write(b, 8);
  };
  for (Eigen::Index c = 0; c < m.weights.rows(); ++c)
    for (Eigen::Index d = 0; d < m.weights.cols(); ++d) put(m.weights(c, d));
  for (Eigen::Index c = 0; c < 3; ++c) put(m.bias[c]);
  if (!out) throw FormatError("model write failed");
}

inline void write_model(const ConnotationModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_model(m, out);
}

inline ConnotationModel read_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty model file");
  ConnotationModel m;
  std::size_t dim = 0;
  try {
    auto h = nlohmann::json::parse(line);
    if (h.at("format") != "caa-model/1") throw FormatError("unsupported model format");
    m.dimension = parse_dimension(h.at("dimension").get<std::string>());
    dim = h.at("dim").get<std::size_t>();
    if (dim == 0 || h.at("n_parameters").get<std::size_t>() != linear_parameter_count(dim))
      throw FormatError("parameter count does not match 3 * (D + 1)");
    m.class_weights = h.at("class_weights").get<ClassWeights>();
    m.meta.l2 = h.at("l2").get<double>();
    m.meta.seed = h.at("seed").get<std::uint64_t>();
    m.meta.languages = h.at("languages").get<std::vector<std::string>>();
    m.meta.fold = h.at("fold").get<int>();
    m.meta.iterations = h.at("iterations").get<int>();
    m.meta.converged = h.at("converged").get<bool>();
    m.meta.final_loss = h.at("final_loss").get<double>();
    m.meta.config_hash = h.at("config_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model header: ") + e.what());
  }
  for (double w : m.class_weights)
    if (!(w > 0)) throw FormatError("class weights must be positive");
  auto get = [&]() {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw FormatError("truncated model parameters");
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
    return std::bit_cast<double>(bits);
  };
  m.weights.resize(kNumClasses, static_cast<Eigen::Index>(dim));
  for (Eigen::Index c = 0; c < kNumClasses; ++c)
    for (Eigen::Index d = 0; d < m.weights.cols(); ++d) m.weights(c, d) = get();
  for (Eigen::Index c = 0; c < 3; ++c) m.bias[c] = get();
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in model file");
  return m;
}

inline ConnotationModel read_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file '" + path + "'");
  return read_model(in);
}

}  // namespace caa
