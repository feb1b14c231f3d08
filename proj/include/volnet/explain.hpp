#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "volnet/csv.hpp"
#include "volnet/error.hpp"
#include "volnet/models.hpp"
#include "volnet/parallel.hpp"

namespace volnet {

/// Anything that maps a feature vector to a real-valued model output.
template <class F>
concept Scorer = requires(const F& f, std::span<const double> x) {
  { f(x) } -> std::convertible_to<double>;
};

inline auto scorer_of(const TrainedClassifier& m) {
  return [&m](std::span<const double> x) { return score(m, x); };
}

struct Attribution {
  std::string user;
  std::vector<double> phi;
  /// Standard error per feature; zeros in exact mode.
  std::vector<double> std_err;
  double base_value = 0.0;
  double prediction = 0.0;
};

inline constexpr std::size_t kMaxExactFeatures = 12;

namespace detail {

inline void check_explain_inputs(std::span<const double> x, const FeatureMatrix& background) {
  if (background.empty()) throw Error("explain", "background sample is empty");
  for (const auto& b : background)
    if (b.size() != x.size()) throw Error("explain", "background row arity differs from the explained row");
}

template <Scorer F>
double mean_score(const F& f, const FeatureMatrix& rows) {
  double s = 0.0;
  for (const auto& r : rows) s += f(std::span<const double>(r));
  return s / static_cast<double>(rows.size());
}

}  // namespace detail

/// Exact interventional Shapley values by enumerating all 2^d coalitions.
/// v(S) averages the model over background rows with the features in S
/// replaced by x.
template <Scorer F>
Attribution shapley_exact(const F& f, std::span<const double> x, const FeatureMatrix& background) {
  detail::check_explain_inputs(x, background);
  const std::size_t d = x.size();
  if (d > kMaxExactFeatures)
    throw Error("explain", fmt::format("exact Shapley supports at most {} features (got {}); use shapley_mc",
                                       kMaxExactFeatures, d));
  const std::size_t subsets = std::size_t{1} << d;
  std::vector<double> value(subsets, 0.0);
  std::vector<double> z(d);
  for (std::size_t mask = 0; mask < subsets; ++mask) {
    double s = 0.0;
    for (const auto& b : background) {
      for (std::size_t j = 0; j < d; ++j) z[j] = (mask >> j) & 1 ? x[j] : b[j];
      s += f(std::span<const double>(z));
    }
    value[mask] = s / static_cast<double>(background.size());
  }
  // weight[s] = s! (d - s - 1)! / d!
  std::vector<double> weight(d, 0.0);
  for (std::size_t s = 0; s < d; ++s) {
    double w = 1.0 / static_cast<double>(d);
    // 1/d * 1/C(d-1, s)
    for (std::size_t i = 1; i <= s; ++i) w *= static_cast<double>(i) / static_cast<double>(d - s - 1 + i);
    weight[s] = w;
  }
  Attribution a;
  a.phi.assign(d, 0.0);
  a.std_err.assign(d, 0.0);
  for (std::size_t mask = 0; mask < subsets; ++mask) {
    const auto size = static_cast<std::size_t>(std::popcount(mask));
    for (std::size_t i = 0; i < d; ++i)
      if (!((mask >> i) & 1)) a.phi[i] += weight[size] * (value[mask | (std::size_t{1} << i)] - value[mask]);
  }
  a.base_value = value[0];
  a.prediction = value[subsets - 1];
  return a;
}

/// Permutation-sampling Shapley estimator: each sample draws a feature order
/// and one background row, then credits each feature with the change in
/// model output when it is switched from the background value to x.
template <Scorer F>
Attribution shapley_mc(const F& f, std::span<const double> x, const FeatureMatrix& background,
                       std::size_t n_permutations, std::uint64_t seed) {
  detail::check_explain_inputs(x, background);
  if (n_permutations < 2) throw Error("explain", "need at least 2 permutations");
  const std::size_t d = x.size();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, background.size() - 1);
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> sum(d, 0.0), sum_sq(d, 0.0), z(d);
  for (std::size_t p = 0; p < n_permutations; ++p) {
    std::shuffle(order.begin(), order.end(), rng);
    const auto& b = background[pick(rng)];
    std::copy(b.begin(), b.end(), z.begin());
    double prev = f(std::span<const double>(z));
    for (std::size_t j : order) {
      z[j] = x[j];
      const double cur = f(std::span<const double>(z));
      const double delta = cur - prev;
      sum[j] += delta;
      sum_sq[j] += delta * delta;
      prev = cur;
    }
  }
  Attribution a;
  a.phi.resize(d);
  a.std_err.resize(d);
  const auto n = static_cast<double>(n_permutations);
  for (std::size_t j = 0; j < d; ++j) {
    a.phi[j] = sum[j] / n;
    const double var = std::max(0.0, (sum_sq[j] - n * a.phi[j] * a.phi[j]) / (n - 1.0));
    a.std_err[j] = std::sqrt(var / n);
  }
  a.base_value = detail::mean_score(f, background);
  a.prediction = f(x);
  return a;
}

/// Seeded subsample of at most `max_rows` rows, in original order.
inline FeatureMatrix background_sample(const FeatureMatrix& X, std::size_t max_rows, std::uint64_t seed) {
  if (X.size() <= max_rows) return X;
  std::vector<std::size_t> idx(X.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(max_rows);
  std::sort(idx.begin(), idx.end());
  FeatureMatrix out;
  for (auto i : idx) out.push_back(X[i]);
  return out;
}

struct Importance {
  std::string feature;
  double mean_abs_phi = 0.0;
  std::size_t rank = 0;  // 1-based
};

/// Ranks features by mean |phi| over the given attributions, descending,
/// ties broken by feature name.
inline std::vector<Importance> rank_importance(const std::vector<Attribution>& attributions,
                                               const std::vector<std::string>& names) {
  std::vector<Importance> out;
  for (std::size_t j = 0; j < names.size(); ++j) {
    double s = 0.0;
    for (const auto& a : attributions) s += std::abs(a.phi.at(j));
    out.push_back({names[j], attributions.empty() ? 0.0 : s / static_cast<double>(attributions.size()), 0});
  }
  std::sort(out.begin(), out.end(), [](const Importance& a, const Importance& b) {
    return a.mean_abs_phi != b.mean_abs_phi ? a.mean_abs_phi > b.mean_abs_phi : a.feature < b.feature;
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = i + 1;
  return out;
}

struct GlobalImportance {
  std::vector<Attribution> rows;
  std::vector<Importance> ranking;
};

/// Monte Carlo attributions for every row of X, then the mean-|phi| ranking.
/// Row i uses seed mix(seed, i), so results do not depend on threading.
template <Scorer F>
GlobalImportance global_importance(const F& f, const FeatureMatrix& X, const FeatureMatrix& background,
                                   const std::vector<std::string>& names, std::uint64_t seed,
                                   std::size_t n_permutations = 200) {
  if (!X.empty() && names.size() != X.front().size()) throw Error("explain", "feature name count mismatch");
  GlobalImportance g;
  g.rows.resize(X.size());
  parallel_for(X.size(), [&](std::size_t i) {
    g.rows[i] = shapley_mc(f, X[i], background, n_permutations, detail::mix_seed(seed, i));
  });
  g.ranking = rank_importance(g.rows, names);
  return g;
}

inline std::string attribution_csv(const std::vector<Attribution>& rows, const std::vector<std::string>& names) {
  std::string out = "user_id,feature,phi,std_err\n";
  for (const auto& a : rows)
    for (std::size_t j = 0; j < names.size(); ++j)
      out += csv::quote(a.user) + ',' + names[j] + ',' + csv::num(a.phi[j]) + ',' + csv::num(a.std_err[j]) + '\n';
  return out;
}

inline std::string importance_csv(const std::vector<Importance>& ranking) {
  std::string out = "feature,mean_abs_phi,rank\n";
  for (const auto& r : ranking) out += r.feature + ',' + csv::num(r.mean_abs_phi) + ',' + std::to_string(r.rank) + '\n';
  return out;
}

}  // namespace volnet
