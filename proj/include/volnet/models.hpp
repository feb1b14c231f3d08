#pragma once

#include <algorithm>
#include <cmath>
#include <array>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "volnet/csv.hpp"
#include "volnet/error.hpp"
#include "volnet/parallel.hpp"

namespace volnet {

using FeatureMatrix = std::vector<std::vector<double>>;
using LabelVector = std::vector<int>;  // 1 = positive class ("changes")
using Hyperparams = std::map<std::string, double>;

enum class Algorithm { naive_bayes, decision_tree, logistic_regression, random_forest, linear_svm, gbdt };

inline constexpr std::array<Algorithm, 6> kAllAlgorithms{Algorithm::naive_bayes,   Algorithm::decision_tree,
                                                        Algorithm::logistic_regression, Algorithm::random_forest,
                                                        Algorithm::linear_svm,    Algorithm::gbdt};

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::naive_bayes: return "naive_bayes";
    case Algorithm::decision_tree: return "decision_tree";
    case Algorithm::logistic_regression: return "logistic_regression";
    case Algorithm::random_forest: return "random_forest";
    case Algorithm::linear_svm: return "linear_svm";
    case Algorithm::gbdt: return "gbdt";
  }
  return "?";
}

inline std::optional<Algorithm> parse_algorithm(std::string_view s) {
  for (auto a : kAllAlgorithms)
    if (to_string(a) == s) return a;
  return std::nullopt;
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Default hyperparameters per algorithm; user-supplied entries override.
inline Hyperparams default_hyperparams(Algorithm a) {
  switch (a) {
    case Algorithm::naive_bayes: return {{"var_floor", 1e-9}};
    case Algorithm::decision_tree: return {{"max_depth", 6}, {"min_samples_leaf", 2}};
    case Algorithm::logistic_regression: return {{"l2", 1e-3}, {"epochs", 500}, {"learning_rate", 0.1}};
    case Algorithm::random_forest:
      return {{"n_trees", 100}, {"max_depth", 0}, {"min_samples_leaf", 1}, {"max_features", 0}, {"bootstrap", 1}};
    case Algorithm::linear_svm: return {{"l2", 1e-3}, {"epochs", 50}};
    case Algorithm::gbdt:
      return {{"rounds", 100}, {"max_depth", 3}, {"learning_rate", 0.1}, {"lambda", 1.0}, {"min_child_weight", 1.0}};
  }
  return {};
}

// --- learned state ---------------------------------------------------------

struct Standardizer {
  std::vector<double> mean, scale;

  static Standardizer fit(const FeatureMatrix& X) {
    const std::size_t d = X.front().size();
    Standardizer s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (const auto& r : X)
      for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
    for (auto& m : s.mean) m /= static_cast<double>(X.size());
    for (const auto& r : X)
      for (std::size_t j = 0; j < d; ++j) s.scale[j] += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
    for (auto& v : s.scale) {
      v = std::sqrt(v / static_cast<double>(X.size()));
      if (v < 1e-12) v = 1.0;
    }
    return s;
  }

  double apply(std::size_t j, double v) const { return (v - mean[j]) / scale[j]; }
};

struct NaiveBayesParams {
  std::array<double, 2> log_prior{};
  std::array<std::vector<double>, 2> mean, var;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::size_t left = 0, right = 0;
  double value = 0.0;  // positive fraction (CART) or leaf weight (boosting)
};

struct Tree {
  std::vector<TreeNode> nodes;

  double eval(std::span<const double> x) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
    return nodes[i].value;
  }
};

struct LinearParams {
  Standardizer standardizer;
  std::vector<double> weights;
  double bias = 0.0;

  double margin(std::span<const double> x) const {
    double z = bias;
    for (std::size_t j = 0; j < weights.size(); ++j) z += weights[j] * standardizer.apply(j, x[j]);
    return z;
  }
};

struct ForestParams {
  std::vector<Tree> trees;
};

struct BoostParams {
  double base_score = 0.0;
  double learning_rate = 0.1;
  std::vector<Tree> trees;
  /// Mean training log-loss after each round.
  std::vector<double> train_loss;
};

struct ConstantParams {
  int label = 0;
};

using ModelParams =
    std::variant<ConstantParams, NaiveBayesParams, Tree, LinearParams, ForestParams, BoostParams>;

struct TrainedClassifier {
  Algorithm algorithm = Algorithm::gbdt;
  Hyperparams hyperparams;
  std::uint64_t seed = 0;
  std::vector<std::string> feature_names;
  std::size_t arity = 0;
  ModelParams params;
  std::vector<std::string> warnings;
};

struct Prediction {
  int label;
  double score;
};

// --- tree growing ----------------------------------------------------------

namespace detail {

inline double hp(const Hyperparams& h, const std::string& key) {
  auto it = h.find(key);
  if (it == h.end()) throw Error("models", "missing hyperparameter " + key);
  return it->second;
}

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double score = 0.0;
};

/// Sorted sweep over each candidate feature. `eval(left_stats, right_stats)`
/// scores a split (higher is better); Stats accumulate per sample.
template <class Stats, class Add, class Eval, class Valid>
SplitChoice best_split(const FeatureMatrix& X, const std::vector<std::size_t>& idx,
                       const std::vector<std::size_t>& features, Add add, Eval eval, Valid valid) {
  SplitChoice best;
  bool found = false;
  std::vector<std::size_t> order(idx);
  Stats total{};
  for (auto i : idx) add(total, i, +1);
  for (std::size_t f : features) {
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return X[a][f] != X[b][f] ? X[a][f] < X[b][f] : a < b;
    });
    Stats left{};
    Stats right = total;
    for (std::size_t p = 0; p + 1 < order.size(); ++p) {
      add(left, order[p], +1);
      add(right, order[p], -1);
      const double v = X[order[p]][f], nv = X[order[p + 1]][f];
      if (v == nv) continue;
      if (!valid(left, right)) continue;
      const double s = eval(left, right);
      if (!found || s > best.score + 1e-12) {
        best = {static_cast<int>(f), v + (nv - v) / 2.0, s};
        found = true;
      }
    }
  }
  return best;
}

struct CartOptions {
  std::size_t max_depth = 6;  // 0 = unlimited
  std::size_t min_samples_leaf = 2;
  std::size_t max_features = 0;  // 0 = all
};

struct ClassStats {
  double n = 0, pos = 0;
};

inline double gini(const ClassStats& s) {
  if (s.n == 0) return 0.0;
  const double p = s.pos / s.n;
  return 2.0 * p * (1.0 - p);
}

inline std::size_t grow_cart(Tree& tree, const FeatureMatrix& X, const LabelVector& y, std::vector<std::size_t> idx,
                             std::size_t depth, const CartOptions& opt, std::mt19937_64& rng) {
  ClassStats s;
  for (auto i : idx) {
    s.n += 1;
    s.pos += y[i];
  }
  const std::size_t id = tree.nodes.size();
  tree.nodes.push_back({-1, 0.0, 0, 0, s.pos / s.n});
  const bool pure = s.pos == 0 || s.pos == s.n;
  if (pure || (opt.max_depth != 0 && depth >= opt.max_depth) || idx.size() < 2 * opt.min_samples_leaf) return id;

  const std::size_t d = X.front().size();
  std::vector<std::size_t> features(d);
  std::iota(features.begin(), features.end(), 0);
  if (opt.max_features != 0 && opt.max_features < d) {
    std::shuffle(features.begin(), features.end(), rng);
    features.resize(opt.max_features);
    std::sort(features.begin(), features.end());
  }
  const double min_leaf = static_cast<double>(opt.min_samples_leaf);
  auto split = best_split<ClassStats>(
      X, idx, features,
      [&](ClassStats& st, std::size_t i, int sign) {
        st.n += sign;
        st.pos += sign * y[i];
      },
      [&](const ClassStats& l, const ClassStats& r) { return -(l.n * gini(l) + r.n * gini(r)) / s.n; },
      [&](const ClassStats& l, const ClassStats& r) { return l.n >= min_leaf && r.n >= min_leaf; });
  if (split.feature < 0) return id;

  std::vector<std::size_t> li, ri;
  for (auto i : idx) (X[i][split.feature] <= split.threshold ? li : ri).push_back(i);
  idx.clear();
  idx.shrink_to_fit();
  const std::size_t l = grow_cart(tree, X, y, std::move(li), depth + 1, opt, rng);
  const std::size_t r = grow_cart(tree, X, y, std::move(ri), depth + 1, opt, rng);
  tree.nodes[id].feature = split.feature;
  tree.nodes[id].threshold = split.threshold;
  tree.nodes[id].left = l;
  tree.nodes[id].right = r;
  return id;
}

struct GradStats {
  double g = 0, h = 0;
};

struct BoostTreeOptions {
  std::size_t max_depth = 3;
  double lambda = 1.0;
  double min_child_weight = 1.0;
};

/// Second-order regression tree: leaf weight -G/(H+lambda), split gain
/// 1/2 [G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l)], split only on positive gain.
inline std::size_t grow_boost(Tree& tree, const FeatureMatrix& X, const std::vector<double>& g,
                              const std::vector<double>& h, std::vector<std::size_t> idx, std::size_t depth,
                              const BoostTreeOptions& opt) {
  GradStats s;
  for (auto i : idx) {
    s.g += g[i];
    s.h += h[i];
  }
  const std::size_t id = tree.nodes.size();
  tree.nodes.push_back({-1, 0.0, 0, 0, -s.g / (s.h + opt.lambda)});
  if (depth >= opt.max_depth || idx.size() < 2) return id;
  auto score = [&](const GradStats& st) { return st.g * st.g / (st.h + opt.lambda); };
  std::vector<std::size_t> features(X.front().size());
  std::iota(features.begin(), features.end(), 0);
  auto split = best_split<GradStats>(
      X, idx, features,
      [&](GradStats& st, std::size_t i, int sign) {
        st.g += sign * g[i];
        st.h += sign * h[i];
      },
      [&](const GradStats& l, const GradStats& r) { return 0.5 * (score(l) + score(r) - score(s)); },
      [&](const GradStats& l, const GradStats& r) {
        return l.h >= opt.min_child_weight && r.h >= opt.min_child_weight;
      });
  if (split.feature < 0 || split.score <= 0.0) return id;
  std::vector<std::size_t> li, ri;
  for (auto i : idx) (X[i][split.feature] <= split.threshold ? li : ri).push_back(i);
  const std::size_t l = grow_boost(tree, X, g, h, std::move(li), depth + 1, opt);
  const std::size_t r = grow_boost(tree, X, g, h, std::move(ri), depth + 1, opt);
  tree.nodes[id].feature = split.feature;
  tree.nodes[id].threshold = split.threshold;
  tree.nodes[id].left = l;
  tree.nodes[id].right = r;
  return id;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

inline NaiveBayesParams fit_naive_bayes(const FeatureMatrix& X, const LabelVector& y, double var_floor) {
  const std::size_t d = X.front().size();
  NaiveBayesParams p;
  std::array<double, 2> count{0, 0};
  for (int c = 0; c < 2; ++c) {
    p.mean[c].assign(d, 0.0);
    p.var[c].assign(d, 0.0);
  }
  for (std::size_t i = 0; i < X.size(); ++i) {
    count[y[i]] += 1;
    for (std::size_t j = 0; j < d; ++j) p.mean[y[i]][j] += X[i][j];
  }
  for (int c = 0; c < 2; ++c)
    for (auto& m : p.mean[c]) m /= count[c];
  for (std::size_t i = 0; i < X.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) p.var[y[i]][j] += (X[i][j] - p.mean[y[i]][j]) * (X[i][j] - p.mean[y[i]][j]);
  for (int c = 0; c < 2; ++c) {
    for (auto& v : p.var[c]) v = std::max(v / count[c], var_floor);
    p.log_prior[c] = std::log(count[c] / static_cast<double>(X.size()));
  }
  return p;
}

inline LinearParams fit_logistic(const FeatureMatrix& X, const LabelVector& y, double l2, std::size_t epochs,
                                 double lr) {
  LinearParams p;
  p.standardizer = Standardizer::fit(X);
  const std::size_t n = X.size(), d = X.front().size();
  FeatureMatrix Z(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) Z[i][j] = p.standardizer.apply(j, X[i][j]);
  p.weights.assign(d, 0.0);
  std::vector<double> grad(d);
  for (std::size_t e = 0; e < epochs; ++e) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double z = p.bias;
      for (std::size_t j = 0; j < d; ++j) z += p.weights[j] * Z[i][j];
      const double r = sigmoid(z) - y[i];
      for (std::size_t j = 0; j < d; ++j) grad[j] += r * Z[i][j];
      gb += r;
    }
    for (std::size_t j = 0; j < d; ++j) p.weights[j] -= lr * (grad[j] / static_cast<double>(n) + l2 * p.weights[j]);
    p.bias -= lr * gb / static_cast<double>(n);
  }
  return p;
}

/// Pegasos on standardized features with an appended constant input; the
/// returned weights average the iterates of the second half of training.
inline LinearParams fit_linear_svm(const FeatureMatrix& X, const LabelVector& y, double l2, std::size_t epochs,
                                   std::uint64_t seed) {
  LinearParams p;
  p.standardizer = Standardizer::fit(X);
  const std::size_t n = X.size(), d = X.front().size();
  FeatureMatrix Z(n, std::vector<double>(d + 1, 1.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) Z[i][j] = p.standardizer.apply(j, X[i][j]);
  std::vector<double> w(d + 1, 0.0), avg(d + 1, 0.0);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order = all_indices(n);
  std::size_t t = 0, averaged = 0;
  const std::size_t total = epochs * n;
  for (std::size_t e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) {
      ++t;
      const double eta = 1.0 / (l2 * static_cast<double>(t));
      const double yi = y[i] ? 1.0 : -1.0;
      double m = 0.0;
      for (std::size_t j = 0; j <= d; ++j) m += w[j] * Z[i][j];
      for (auto& v : w) v *= (1.0 - eta * l2);
      if (yi * m < 1.0)
        for (std::size_t j = 0; j <= d; ++j) w[j] += eta * yi * Z[i][j];
      if (2 * t > total) {
        for (std::size_t j = 0; j <= d; ++j) avg[j] += w[j];
        ++averaged;
      }
    }
  }
  for (auto& v : avg) v /= static_cast<double>(std::max<std::size_t>(1, averaged));
  p.weights.assign(avg.begin(), avg.end() - 1);
  p.bias = avg.back();
  return p;
}

inline double log_loss(const LabelVector& y, const std::vector<double>& margin) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double z = margin[i];
    // log(1 + exp(-z)) for y=1, log(1 + exp(z)) for y=0, computed stably
    const double a = y[i] ? -z : z;
    s += a > 0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
  }
  return s / static_cast<double>(y.size());
}

inline BoostParams fit_gbdt(const FeatureMatrix& X, const LabelVector& y, const Hyperparams& h) {
  BoostParams p;
  const std::size_t n = X.size();
  double pos = 0;
  for (int v : y) pos += v;
  const double prior = std::clamp(pos / static_cast<double>(n), 1e-6, 1.0 - 1e-6);
  p.base_score = std::log(prior / (1.0 - prior));
  p.learning_rate = hp(h, "learning_rate");
  BoostTreeOptions opt{static_cast<std::size_t>(hp(h, "max_depth")), hp(h, "lambda"), hp(h, "min_child_weight")};
  std::vector<double> margin(n, p.base_score), g(n), hess(n);
  const auto idx = all_indices(n);
  const auto rounds = static_cast<std::size_t>(hp(h, "rounds"));
  for (std::size_t r = 0; r < rounds; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      const double pr = sigmoid(margin[i]);
      g[i] = pr - y[i];
      hess[i] = std::max(pr * (1.0 - pr), 1e-16);
    }
    Tree t;
    grow_boost(t, X, g, hess, idx, 0, opt);
    for (auto& node : t.nodes) node.value *= p.learning_rate;
    for (std::size_t i = 0; i < n; ++i) margin[i] += t.eval(X[i]);
    p.trees.push_back(std::move(t));
    p.train_loss.push_back(log_loss(y, margin));
  }
  return p;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t i) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (i + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline ForestParams fit_forest(const FeatureMatrix& X, const LabelVector& y, const Hyperparams& h,
                               std::uint64_t seed) {
  const auto n_trees = static_cast<std::size_t>(hp(h, "n_trees"));
  const std::size_t d = X.front().size();
  CartOptions opt{static_cast<std::size_t>(hp(h, "max_depth")), static_cast<std::size_t>(hp(h, "min_samples_leaf")),
                  static_cast<std::size_t>(hp(h, "max_features"))};
  if (opt.max_features == 0)
    opt.max_features = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(d)))));
  const bool bootstrap = hp(h, "bootstrap") != 0.0;
  ForestParams p;
  p.trees.resize(n_trees);
  parallel_for(n_trees, [&](std::size_t t) {
    std::mt19937_64 rng(mix_seed(seed, t));
    std::vector<std::size_t> idx;
    if (bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, X.size() - 1);
      for (std::size_t i = 0; i < X.size(); ++i) idx.push_back(pick(rng));
      std::sort(idx.begin(), idx.end());
    } else {
      idx = all_indices(X.size());
    }
    grow_cart(p.trees[t], X, y, std::move(idx), 0, opt, rng);
  });
  return p;
}

}  // namespace detail

// --- train / predict -------------------------------------------------------

/// Fits one classifier. Labels must be 0/1. When only one class is present
/// the result is a constant predictor and a warning is recorded.
inline TrainedClassifier train(Algorithm algorithm, const FeatureMatrix& X, const LabelVector& y,
                               const Hyperparams& overrides = {}, std::uint64_t seed = 0,
                               std::vector<std::string> feature_names = {}) {
  if (X.size() != y.size()) throw Error("models", "feature matrix and labels differ in length");
  if (X.empty()) throw Error("models", "cannot train on an empty dataset");
  const std::size_t d = X.front().size();
  if (d == 0) throw Error("models", "feature matrix has no columns");
  for (const auto& r : X)
    if (r.size() != d) throw Error("models", "ragged feature matrix");
  for (int v : y)
    if (v != 0 && v != 1) throw Error("models", "labels must be 0 or 1");
  if (!feature_names.empty() && feature_names.size() != d) throw Error("models", "feature name count mismatch");

  TrainedClassifier m;
  m.algorithm = algorithm;
  m.hyperparams = default_hyperparams(algorithm);
  for (const auto& [k, v] : overrides) {
    if (!m.hyperparams.count(k)) throw Error("models", "unknown hyperparameter " + k + " for " + std::string(to_string(algorithm)));
    m.hyperparams[k] = v;
  }
  m.seed = seed;
  m.arity = d;
  m.feature_names = std::move(feature_names);

  const long pos = std::count(y.begin(), y.end(), 1);
  if (pos == 0 || pos == static_cast<long>(y.size())) {
    m.params = ConstantParams{pos == 0 ? 0 : 1};
    m.warnings.push_back("single-class training labels; using a constant predictor");
    return m;
  }
  const auto& h = m.hyperparams;
  using detail::hp;
  switch (algorithm) {
    case Algorithm::naive_bayes: m.params = detail::fit_naive_bayes(X, y, hp(h, "var_floor")); break;
    case Algorithm::decision_tree: {
      Tree t;
      std::mt19937_64 rng(seed);
      detail::grow_cart(t, X, y, detail::all_indices(X.size()), 0,
                        {static_cast<std::size_t>(hp(h, "max_depth")),
                         static_cast<std::size_t>(hp(h, "min_samples_leaf")), 0},
                        rng);
      m.params = std::move(t);
      break;
    }
    case Algorithm::logistic_regression:
      m.params = detail::fit_logistic(X, y, hp(h, "l2"), static_cast<std::size_t>(hp(h, "epochs")),
                                      hp(h, "learning_rate"));
      break;
    case Algorithm::random_forest: m.params = detail::fit_forest(X, y, h, seed); break;
    case Algorithm::linear_svm:
      m.params = detail::fit_linear_svm(X, y, hp(h, "l2"), static_cast<std::size_t>(hp(h, "epochs")), seed);
      break;
    case Algorithm::gbdt: m.params = detail::fit_gbdt(X, y, h); break;
  }
  return m;
}

/// Probability-like score of the positive class:
///  - naive_bayes: posterior; decision_tree / random_forest: leaf positive
///    fraction (averaged over trees); logistic_regression / gbdt: sigmoid of
///    the margin; linear_svm: sigmoid of the raw hinge margin (uncalibrated).
inline double score(const TrainedClassifier& m, std::span<const double> x) {
  if (x.size() != m.arity)
    throw Error("models", fmt::format("feature vector has {} values, model expects {}", x.size(), m.arity));
  return std::visit(
      [&](const auto& p) -> double {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, ConstantParams>) {
          return static_cast<double>(p.label);
        } else if constexpr (std::is_same_v<P, NaiveBayesParams>) {
          std::array<double, 2> ll = p.log_prior;
          for (int c = 0; c < 2; ++c)
            for (std::size_t j = 0; j < x.size(); ++j) {
              const double dv = x[j] - p.mean[c][j];
              ll[c] += -0.5 * std::log(2.0 * std::numbers::pi * p.var[c][j]) - dv * dv / (2.0 * p.var[c][j]);
            }
          return sigmoid(ll[1] - ll[0]);
        } else if constexpr (std::is_same_v<P, Tree>) {
          return p.eval(x);
        } else if constexpr (std::is_same_v<P, LinearParams>) {
          return sigmoid(p.margin(x));
        } else if constexpr (std::is_same_v<P, ForestParams>) {
          double s = 0.0;
          for (const auto& t : p.trees) s += t.eval(x);
          return s / static_cast<double>(p.trees.size());
        } else {
          double z = p.base_score;
          for (const auto& t : p.trees) z += t.eval(x);
          return sigmoid(z);
        }
      },
      m.params);
}

inline Prediction predict(const TrainedClassifier& m, std::span<const double> x) {
  const double s = score(m, x);
  return {s >= 0.5 ? 1 : 0, s};
}

// --- evaluation ------------------------------------------------------------

struct Metrics {
  double accuracy = 0.0;
  double f1 = 0.0;
};

/// Accuracy and F1 of the positive class (1). F1 is 0 when precision and
/// recall are both 0.
inline Metrics metrics(const LabelVector& y_true, const LabelVector& y_pred) {
  if (y_true.size() != y_pred.size()) throw Error("models", "metrics inputs differ in length");
  if (y_true.empty()) throw Error("models", "metrics of an empty prediction set");
  double tp = 0, fp = 0, fn = 0, correct = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    correct += y_true[i] == y_pred[i];
    tp += y_true[i] == 1 && y_pred[i] == 1;
    fp += y_true[i] == 0 && y_pred[i] == 1;
    fn += y_true[i] == 1 && y_pred[i] == 0;
  }
  Metrics m;
  m.accuracy = correct / static_cast<double>(y_true.size());
  const double denom = 2 * tp + fp + fn;
  m.f1 = denom == 0 ? 0.0 : 2 * tp / denom;
  return m;
}

struct EvalReport {
  Algorithm algorithm = Algorithm::gbdt;
  std::uint64_t seed = 0;
  std::size_t folds = 0;
  /// Test fold of each sample.
  std::vector<std::size_t> fold_of;
  std::vector<double> fold_accuracy, fold_f1;
  std::vector<bool> fold_degenerate;
  double mean_accuracy = 0.0, mean_f1 = 0.0;
  double sd_accuracy = 0.0, sd_f1 = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  /// Per-fold models, kept only when requested.
  std::vector<TrainedClassifier> fold_models;
};

/// Stratified fold assignment: each class is shuffled from `seed` and dealt
/// round-robin, the second class continuing where the first stopped.
inline std::vector<std::size_t> stratified_folds(const LabelVector& y, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error("models", "cross-validation needs at least 2 folds");
  if (k > y.size()) throw Error("models", fmt::format("{} folds requested for {} samples", k, y.size()));
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> fold(y.size());
  std::size_t next = 0;
  for (int c = 0; c < 2; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == c) members.push_back(i);
    std::shuffle(members.begin(), members.end(), rng);
    for (auto i : members) fold[i] = next++ % k;
  }
  return fold;
}

struct CvOptions {
  std::size_t folds = 10;
  std::uint64_t seed = 0;
  Hyperparams hyperparams;
  bool keep_models = false;
};

/// Stratified k-fold cross-validation. Every sample is tested exactly once;
/// models (and any standardization they do) see only their training folds.
/// Folds whose training part lacks a class are flagged degenerate.
inline EvalReport kfold_cv(Algorithm algorithm, const FeatureMatrix& X, const LabelVector& y,
                           const CvOptions& opt = {}) {
  if (X.size() != y.size()) throw Error("models", "feature matrix and labels differ in length");
  EvalReport r;
  r.algorithm = algorithm;
  r.seed = opt.seed;
  r.folds = opt.folds;
  r.fold_of = stratified_folds(y, opt.folds, opt.seed);
  r.fold_accuracy.resize(opt.folds);
  r.fold_f1.resize(opt.folds);
  r.fold_degenerate.assign(opt.folds, false);
  std::vector<LabelVector> fold_true(opt.folds), fold_pred(opt.folds);
  std::vector<TrainedClassifier> models(opt.folds);

  parallel_for(opt.folds, [&](std::size_t f) {
    FeatureMatrix Xtr, Xte;
    LabelVector ytr;
    for (std::size_t i = 0; i < X.size(); ++i) {
      if (r.fold_of[i] == f) {
        Xte.push_back(X[i]);
        fold_true[f].push_back(y[i]);
      } else {
        Xtr.push_back(X[i]);
        ytr.push_back(y[i]);
      }
    }
    const long pos = std::count(ytr.begin(), ytr.end(), 1);
    r.fold_degenerate[f] = pos == 0 || pos == static_cast<long>(ytr.size());
    models[f] = train(algorithm, Xtr, ytr, opt.hyperparams, detail::mix_seed(opt.seed, f));
    for (const auto& x : Xte) fold_pred[f].push_back(predict(models[f], x).label);
    auto m = metrics(fold_true[f], fold_pred[f]);
    r.fold_accuracy[f] = m.accuracy;
    r.fold_f1[f] = m.f1;
  });

  for (std::size_t f = 0; f < opt.folds; ++f)
    for (std::size_t i = 0; i < fold_true[f].size(); ++i) {
      const int t = fold_true[f][i], p = fold_pred[f][i];
      r.tp += t == 1 && p == 1;
      r.fp += t == 0 && p == 1;
      r.tn += t == 0 && p == 0;
      r.fn += t == 1 && p == 0;
    }
  auto mean_sd = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / static_cast<double>(v.size()));
  };
  mean_sd(r.fold_accuracy, r.mean_accuracy, r.sd_accuracy);
  mean_sd(r.fold_f1, r.mean_f1, r.sd_f1);
  if (opt.keep_models) r.fold_models = std::move(models);
  return r;
}

// --- persistence -----------------------------------------------------------

namespace detail {

inline nlohmann::json tree_json(const Tree& t) {
  auto arr = nlohmann::json::array();
  for (const auto& n : t.nodes) arr.push_back({n.feature, n.threshold, n.left, n.right, n.value});
  return arr;
}

inline Tree tree_from_json(const nlohmann::json& j) {
  Tree t;
  for (const auto& n : j)
    t.nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<std::size_t>(),
                       n.at(3).get<std::size_t>(), n.at(4).get<double>()});
  return t;
}

}  // namespace detail

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json to_json(const TrainedClassifier& m) {
  nlohmann::json j;
  j["format"] = "volnet.classifier";
  j["version"] = kModelFormatVersion;
  j["algorithm"] = to_string(m.algorithm);
  j["hyperparams"] = m.hyperparams;
  j["seed"] = m.seed;
  j["feature_names"] = m.feature_names;
  j["arity"] = m.arity;
  auto& p = j["params"];
  std::visit(
      [&](const auto& v) {
        using P = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<P, ConstantParams>) {
          p = {{"kind", "constant"}, {"label", v.label}};
        } else if constexpr (std::is_same_v<P, NaiveBayesParams>) {
          p = {{"kind", "naive_bayes"}, {"log_prior", v.log_prior}, {"mean", v.mean}, {"var", v.var}};
        } else if constexpr (std::is_same_v<P, Tree>) {
          p = {{"kind", "tree"}, {"nodes", detail::tree_json(v)}};
        } else if constexpr (std::is_same_v<P, LinearParams>) {
          p = {{"kind", "linear"},
               {"mean", v.standardizer.mean},
               {"scale", v.standardizer.scale},
               {"weights", v.weights},
               {"bias", v.bias}};
        } else if constexpr (std::is_same_v<P, ForestParams>) {
          auto trees = nlohmann::json::array();
          for (const auto& t : v.trees) trees.push_back(detail::tree_json(t));
          p = {{"kind", "forest"}, {"trees", trees}};
        } else {
          auto trees = nlohmann::json::array();
          for (const auto& t : v.trees) trees.push_back(detail::tree_json(t));
          p = {{"kind", "boost"}, {"base_score", v.base_score}, {"learning_rate", v.learning_rate}, {"trees", trees}};
        }
      },
      m.params);
  return j;
}

inline TrainedClassifier classifier_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "volnet.classifier") throw Error("models", "not a classifier file");
    if (j.at("version").get<int>() != kModelFormatVersion)
      throw Error("models", "unsupported classifier format version " + j.at("version").dump());
    TrainedClassifier m;
    auto alg = parse_algorithm(j.at("algorithm").get<std::string>());
    if (!alg) throw Error("models", "unknown algorithm " + j.at("algorithm").dump());
    m.algorithm = *alg;
    m.hyperparams = j.at("hyperparams").get<Hyperparams>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.arity = j.at("arity").get<std::size_t>();
    const auto& p = j.at("params");
    const auto kind = p.at("kind").get<std::string>();
    if (kind == "constant") {
      m.params = ConstantParams{p.at("label").get<int>()};
    } else if (kind == "naive_bayes") {
      NaiveBayesParams nb;
      nb.log_prior = p.at("log_prior").get<std::array<double, 2>>();
      nb.mean = p.at("mean").get<std::array<std::vector<double>, 2>>();
      nb.var = p.at("var").get<std::array<std::vector<double>, 2>>();
      m.params = std::move(nb);
    } else if (kind == "tree") {
      m.params = detail::tree_from_json(p.at("nodes"));
    } else if (kind == "linear") {
      LinearParams lp;
      lp.standardizer.mean = p.at("mean").get<std::vector<double>>();
      lp.standardizer.scale = p.at("scale").get<std::vector<double>>();
      lp.weights = p.at("weights").get<std::vector<double>>();
      lp.bias = p.at("bias").get<double>();
      m.params = std::move(lp);
    } else if (kind == "forest") {
      ForestParams fp;
      for (const auto& t : p.at("trees")) fp.trees.push_back(detail::tree_from_json(t));
      m.params = std::move(fp);
    } else if (kind == "boost") {
      BoostParams bp;
      bp.base_score = p.at("base_score").get<double>();
      bp.learning_rate = p.at("learning_rate").get<double>();
      for (const auto& t : p.at("trees")) bp.trees.push_back(detail::tree_from_json(t));
      m.params = std::move(bp);
    } else {
      throw Error("models", "unknown parameter kind " + kind);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error("models", std::string("malformed classifier JSON: ") + e.what());
  }
}

/// One row per report: model,case,accuracy,f1 (plus fold spread).
inline std::string eval_report_csv_header() { return "model,case,accuracy,f1,accuracy_sd,f1_sd,degenerate_folds\n"; }

inline std::string eval_report_csv_row(const EvalReport& r, std::string_view case_name) {
  const auto degenerate = std::count(r.fold_degenerate.begin(), r.fold_degenerate.end(), true);
  return fmt::format("{},{},{},{},{},{},{}\n", to_string(r.algorithm), case_name, csv::num(r.mean_accuracy),
                     csv::num(r.mean_f1), csv::num(r.sd_accuracy), csv::num(r.sd_f1), degenerate);
}

}  // namespace volnet
