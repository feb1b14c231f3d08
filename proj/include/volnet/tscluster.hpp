#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "volnet/behavior.hpp"
#include "volnet/csv.hpp"
#include "volnet/error.hpp"

namespace volnet {

using Series = std::vector<double>;
using SeriesView = std::span<const double>;

enum class Metric { euclidean, dtw, softdtw };

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::euclidean: return "euclidean";
    case Metric::dtw: return "dtw";
    case Metric::softdtw: return "softdtw";
  }
  return "?";
}

inline std::optional<Metric> parse_metric(std::string_view s) {
  for (auto m : {Metric::euclidean, Metric::dtw, Metric::softdtw})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

// --- distances -------------------------------------------------------------

/// Squared Euclidean distance.
inline double euclidean_sq(SeriesView a, SeriesView b) {
  if (a.size() != b.size())
    throw Error("tscluster", fmt::format("series length mismatch ({} vs {})", a.size(), b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// Unconstrained DTW with squared pointwise cost; steps diagonal, up, left.
/// Two rolling rows, O(|a||b|) time.
inline double dtw(SeriesView a, SeriesView b) {
  if (a.empty() || b.empty()) throw Error("tscluster", "dtw of an empty series");
  constexpr double inf = std::numeric_limits<double>::infinity();
  const std::size_t m = b.size();
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= m; ++j) {
      const double d = a[i - 1] - b[j - 1];
      cur[j] = d * d + std::min({prev[j - 1], prev[j], cur[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

/// Optimal DTW alignment as (i, j) index pairs from (0,0) to (n-1, m-1).
/// Ties prefer the diagonal step, then up, then left.
inline std::vector<std::pair<std::size_t, std::size_t>> dtw_path(SeriesView a, SeriesView b) {
  if (a.empty() || b.empty()) throw Error("tscluster", "dtw of an empty series");
  constexpr double inf = std::numeric_limits<double>::infinity();
  const std::size_t n = a.size(), m = b.size();
  std::vector<double> acc((n + 1) * (m + 1), inf);
  auto at = [&](std::size_t i, std::size_t j) -> double& { return acc[i * (m + 1) + j]; };
  at(0, 0) = 0.0;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      const double d = a[i - 1] - b[j - 1];
      at(i, j) = d * d + std::min({at(i - 1, j - 1), at(i - 1, j), at(i, j - 1)});
    }
  std::vector<std::pair<std::size_t, std::size_t>> path;
  std::size_t i = n, j = m;
  while (i > 0 && j > 0) {
    path.emplace_back(i - 1, j - 1);
    if (i == 1 && j == 1) break;
    const double diag = at(i - 1, j - 1), up = at(i - 1, j), left = at(i, j - 1);
    if (diag <= up && diag <= left) {
      --i;
      --j;
    } else if (up <= left) {
      --i;
    } else {
      --j;
    }
  }
  std::reverse(path.begin(), path.end());
  return path;
}

/// Soft-DTW: the DTW recursion with min replaced by
/// softmin_g(x) = -g * log(sum exp(-x / g)). Can be negative.
inline double soft_dtw(SeriesView a, SeriesView b, double gamma = 1.0) {
  if (a.empty() || b.empty()) throw Error("tscluster", "soft_dtw of an empty series");
  if (!(gamma > 0.0)) throw Error("tscluster", "soft_dtw gamma must be > 0");
  constexpr double inf = std::numeric_limits<double>::infinity();
  const std::size_t m = b.size();
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  auto softmin = [gamma](double x, double y, double z) {
    const double lo = std::min({x, y, z});
    if (lo == inf) return inf;
    double s = 0.0;
    for (double v : {x, y, z})
      if (v != inf) s += std::exp(-(v - lo) / gamma);
    return lo - gamma * std::log(s);
  };
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= m; ++j) {
      const double d = a[i - 1] - b[j - 1];
      cur[j] = d * d + softmin(prev[j - 1], prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

inline double distance(Metric metric, SeriesView a, SeriesView b, double gamma = 1.0) {
  switch (metric) {
    case Metric::euclidean: return euclidean_sq(a, b);
    case Metric::dtw: return dtw(a, b);
    case Metric::softdtw: return soft_dtw(a, b, gamma);
  }
  return 0.0;
}

/// DTW barycenter averaging, starting from `init`. Each round aligns every
/// member to the current average and replaces each point by the mean of the
/// member values aligned to it.
inline Series dba(const std::vector<SeriesView>& members, Series init, std::size_t max_iter = 30) {
  if (members.empty()) return init;
  for (std::size_t it = 0; it < max_iter; ++it) {
    std::vector<double> sum(init.size(), 0.0);
    std::vector<std::size_t> cnt(init.size(), 0);
    for (const auto& s : members)
      for (auto [ci, si] : dtw_path(init, s)) {
        sum[ci] += s[si];
        ++cnt[ci];
      }
    Series next(init.size());
    double change = 0.0;
    for (std::size_t i = 0; i < init.size(); ++i) {
      next[i] = sum[i] / static_cast<double>(cnt[i]);
      change = std::max(change, std::abs(next[i] - init[i]));
    }
    init = std::move(next);
    if (change < 1e-12) break;
  }
  return init;
}

// --- k-means ---------------------------------------------------------------

struct KMeansOptions {
  std::size_t k = 4;
  Metric metric = Metric::euclidean;
  std::uint64_t seed = 0;
  std::size_t max_iter = 100;
  /// Independent seeded restarts; the lowest-inertia fit is kept.
  std::size_t n_init = 3;
  double gamma = 1.0;
  std::size_t dba_iter = 30;
};

struct ClusterModel {
  std::size_t k = 0;
  Metric metric = Metric::euclidean;
  std::vector<Series> centroids;
  /// Cluster id per input series, in input order.
  std::vector<std::size_t> assignment;
  std::vector<UserId> users;
  double inertia = 0.0;
  std::uint64_t seed = 0;
  double gamma = 1.0;
  /// Inertia after each update step of the kept restart.
  std::vector<double> inertia_history;
  std::size_t iterations = 0;
};

namespace detail {

inline void check_data(const std::vector<Series>& data, std::size_t k) {
  if (data.empty()) throw Error("tscluster", "no series to cluster");
  const std::size_t len = data.front().size();
  if (len == 0) throw Error("tscluster", "empty series");
  for (const auto& s : data)
    if (s.size() != len) throw Error("tscluster", "series have unequal lengths");
  if (k < 2 || k > data.size())
    throw Error("tscluster", fmt::format("k={} must satisfy 2 <= k <= {}", k, data.size()));
}

inline std::vector<std::size_t> assign_all(const std::vector<Series>& data, const std::vector<Series>& centroids,
                                           const KMeansOptions& opt, std::vector<double>& dist_out) {
  std::vector<std::size_t> a(data.size());
  dist_out.assign(data.size(), 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      const double d = distance(opt.metric, data[i], centroids[c], opt.gamma);
      if (d < best) {
        best = d;
        a[i] = c;
      }
    }
    dist_out[i] = best;
  }
  return a;
}

inline std::vector<Series> kmeanspp_init(const std::vector<Series>& data, const KMeansOptions& opt,
                                         std::mt19937_64& rng) {
  std::vector<Series> centroids;
  std::vector<bool> chosen(data.size(), false);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::size_t first = pick(rng);
  centroids.push_back(data[first]);
  chosen[first] = true;
  std::vector<double> nearest(data.size(), std::numeric_limits<double>::infinity());
  while (centroids.size() < opt.k) {
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      nearest[i] = std::min(nearest[i], std::max(0.0, distance(opt.metric, data[i], centroids.back(), opt.gamma)));
      if (!chosen[i]) total += nearest[i];
    }
    std::size_t next = data.size();
    if (total > 0.0) {
      double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (chosen[i]) continue;
        next = i;
        r -= nearest[i];
        if (r < 0.0) break;
      }
    } else {
      for (std::size_t i = 0; i < data.size() && next == data.size(); ++i)
        if (!chosen[i]) next = i;
    }
    chosen[next] = true;
    centroids.push_back(data[next]);
  }
  return centroids;
}

inline ClusterModel kmeans_single(const std::vector<Series>& data, const KMeansOptions& opt, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ClusterModel model;
  model.k = opt.k;
  model.metric = opt.metric;
  model.gamma = opt.gamma;
  model.seed = opt.seed;
  model.centroids = kmeanspp_init(data, opt, rng);
  std::vector<double> dist;
  auto assign = assign_all(data, model.centroids, opt, dist);

  auto update = [&] {
    // Empty clusters take the point farthest from its centroid among
    // clusters that can spare one.
    for (std::size_t c = 0; c < opt.k; ++c) {
      std::vector<std::size_t> sizes(opt.k, 0);
      for (auto a : assign) ++sizes[a];
      if (sizes[c] != 0) continue;
      std::size_t far = data.size();
      for (std::size_t i = 0; i < data.size(); ++i)
        if (sizes[assign[i]] > 1 && (far == data.size() || dist[i] > dist[far])) far = i;
      if (far == data.size()) continue;
      assign[far] = c;
      dist[far] = 0.0;
      model.centroids[c] = data[far];
    }
    for (std::size_t c = 0; c < opt.k; ++c) {
      std::vector<SeriesView> members;
      for (std::size_t i = 0; i < data.size(); ++i)
        if (assign[i] == c) members.emplace_back(data[i]);
      if (members.empty()) continue;
      if (opt.metric == Metric::euclidean) {
        Series mean(data.front().size(), 0.0);
        for (const auto& s : members)
          for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += s[j];
        for (auto& v : mean) v /= static_cast<double>(members.size());
        model.centroids[c] = std::move(mean);
      } else {
        model.centroids[c] = dba(members, model.centroids[c], opt.dba_iter);
      }
    }
  };
  auto inertia = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) s += distance(opt.metric, data[i], model.centroids[assign[i]], opt.gamma);
    return s;
  };

  bool converged = false;
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    update();
    model.inertia_history.push_back(inertia());
    model.iterations = it + 1;
    auto next = assign_all(data, model.centroids, opt, dist);
    if (next == assign) {
      converged = true;
      break;
    }
    assign = std::move(next);
  }
  model.inertia = converged ? model.inertia_history.back() : inertia();
  model.assignment = std::move(assign);
  return model;
}

}  // namespace detail

/// Seeded k-means++ initialisation followed by Lloyd iterations under the
/// chosen metric. Centroids are pointwise means for euclidean and DBA
/// averages for dtw / softdtw. Deterministic for a fixed seed.
inline ClusterModel kmeans_ts(const std::vector<Series>& data, const KMeansOptions& opt) {
  detail::check_data(data, opt.k);
  ClusterModel best;
  bool have = false;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, opt.n_init); ++r) {
    auto m = detail::kmeans_single(data, opt, opt.seed + 0x9E3779B97F4A7C15ULL * r);
    if (!have || m.inertia < best.inertia) {
      best = std::move(m);
      have = true;
    }
  }
  return best;
}

inline std::vector<Series> series_values(const std::vector<DRSeries>& series) {
  std::vector<Series> out;
  out.reserve(series.size());
  for (const auto& s : series) out.push_back(s.values);
  return out;
}

inline ClusterModel kmeans_ts(const std::vector<DRSeries>& series, const KMeansOptions& opt) {
  auto model = kmeans_ts(series_values(series), opt);
  for (const auto& s : series) model.users.push_back(s.user);
  return model;
}

// --- model selection -------------------------------------------------------

/// Calinski-Harabasz index in Euclidean geometry with cluster means taken
/// from the data. Returns +inf when within-cluster scatter is 0 and
/// between-cluster scatter is positive, and 0 when there is no between-
/// cluster scatter.
inline double calinski_harabasz(const std::vector<Series>& data, const std::vector<std::size_t>& assignment,
                                std::size_t k) {
  if (k < 2) throw Error("tscluster", "calinski_harabasz needs k >= 2");
  if (data.size() <= k) throw Error("tscluster", "calinski_harabasz needs more points than clusters");
  if (assignment.size() != data.size()) throw Error("tscluster", "assignment does not cover the data");
  const std::size_t len = data.front().size();
  std::vector<Series> means(k, Series(len, 0.0));
  std::vector<std::size_t> sizes(k, 0);
  Series overall(len, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (assignment[i] >= k) throw Error("tscluster", "cluster id out of range");
    ++sizes[assignment[i]];
    for (std::size_t j = 0; j < len; ++j) {
      means[assignment[i]][j] += data[i][j];
      overall[j] += data[i][j];
    }
  }
  for (auto& v : overall) v /= static_cast<double>(data.size());
  for (std::size_t c = 0; c < k; ++c)
    if (sizes[c] > 0)
      for (auto& v : means[c]) v /= static_cast<double>(sizes[c]);
  double between = 0.0, within = 0.0;
  for (std::size_t c = 0; c < k; ++c)
    if (sizes[c] > 0) between += static_cast<double>(sizes[c]) * euclidean_sq(means[c], overall);
  for (std::size_t i = 0; i < data.size(); ++i) within += euclidean_sq(data[i], means[assignment[i]]);
  const double total = between + within;
  if (between <= 1e-12 * total || total == 0.0) return 0.0;
  if (within <= 1e-12 * total) return std::numeric_limits<double>::infinity();
  return (between / static_cast<double>(k - 1)) / (within / static_cast<double>(data.size() - k));
}

inline double calinski_harabasz(const std::vector<Series>& data, const ClusterModel& model) {
  return calinski_harabasz(data, model.assignment, model.k);
}

struct SelectKResult {
  std::size_t k = 0;
  std::map<std::size_t, double> scores;
  ClusterModel model;
};

/// Fits k-means for each k in [k_min, k_max] (capped at n - 1) and keeps the
/// argmax of Calinski-Harabasz, ties toward the smaller k. Data with no
/// variation at all is rejected.
inline SelectKResult select_k(const std::vector<Series>& data, std::size_t k_min, std::size_t k_max,
                              KMeansOptions opt) {
  if (k_min < 2 || k_min > k_max) throw Error("tscluster", "k range must satisfy 2 <= k_min <= k_max");
  if (data.size() <= k_min)
    throw Error("tscluster", fmt::format("{} series are too few for k_min={}", data.size(), k_min));
  bool varied = false;
  for (const auto& s : data)
    if (s != data.front()) varied = true;
  if (!varied) throw Error("tscluster", "all series are identical; cluster count is undefined");
  SelectKResult result;
  double best = -1.0;
  for (std::size_t k = k_min; k <= std::min(k_max, data.size() - 1); ++k) {
    opt.k = k;
    auto model = kmeans_ts(data, opt);
    const double ch = calinski_harabasz(data, model);
    result.scores[k] = ch;
    if (ch > best) {
      best = ch;
      result.k = k;
      result.model = std::move(model);
    }
  }
  return result;
}

// --- archetypes ------------------------------------------------------------

enum class Archetype { FPD, SAD, FAD, SPD };

inline std::string_view to_string(Archetype a) {
  switch (a) {
    case Archetype::FPD: return "FPD";
    case Archetype::SAD: return "SAD";
    case Archetype::FAD: return "FAD";
    case Archetype::SPD: return "SPD";
  }
  return "?";
}

inline std::optional<Archetype> parse_archetype(std::string_view s) {
  for (auto a : {Archetype::FPD, Archetype::SAD, Archetype::FAD, Archetype::SPD})
    if (to_string(a) == s) return a;
  return std::nullopt;
}

inline bool starts_high(Archetype a) { return a == Archetype::FPD || a == Archetype::SAD; }
inline bool is_stable(Archetype a) { return a == Archetype::SAD || a == Archetype::SPD; }

struct ArchetypeLabel {
  Archetype label;
  double initial_level;
  double final_level;
};

struct LabelOptions {
  std::size_t head = 3;
  std::size_t tail = 3;
  double high_threshold = 0.5;
  double stability_band = 0.2;
};

/// Labels one centroid from its head and tail means. A high start that
/// rises further counts as SAD; a low start that falls further as SPD.
inline ArchetypeLabel label_centroid(SeriesView c, const LabelOptions& opt = {}) {
  if (opt.head == 0 || opt.tail == 0 || c.size() < opt.head + opt.tail)
    throw Error("tscluster", fmt::format("centroid of length {} is shorter than head+tail", c.size()));
  double initial = 0.0, final_level = 0.0;
  for (std::size_t i = 0; i < opt.head; ++i) initial += c[i];
  for (std::size_t i = c.size() - opt.tail; i < c.size(); ++i) final_level += c[i];
  initial /= static_cast<double>(opt.head);
  final_level /= static_cast<double>(opt.tail);
  const bool high = initial >= opt.high_threshold;
  const bool stable = std::abs(final_level - initial) < opt.stability_band;
  Archetype a;
  if (high)
    a = (!stable && final_level < initial) ? Archetype::FPD : Archetype::SAD;
  else
    a = (!stable && final_level > initial) ? Archetype::FAD : Archetype::SPD;
  return {a, initial, final_level};
}

inline std::vector<ArchetypeLabel> label_archetypes(const ClusterModel& model, const LabelOptions& opt = {}) {
  std::vector<ArchetypeLabel> out;
  for (const auto& c : model.centroids) out.push_back(label_centroid(c, opt));
  return out;
}

struct CaseSplit {
  std::vector<UserId> starting_high;  // FPD and SAD members
  std::vector<UserId> starting_low;   // FAD and SPD members
};

inline CaseSplit split_cases(const ClusterModel& model, const std::vector<ArchetypeLabel>& labels) {
  if (labels.size() != model.centroids.size()) throw Error("tscluster", "labels do not cover every cluster");
  CaseSplit out;
  for (std::size_t i = 0; i < model.assignment.size(); ++i) {
    const UserId& u = i < model.users.size() ? model.users[i] : std::to_string(i);
    (starts_high(labels[model.assignment[i]].label) ? out.starting_high : out.starting_low).push_back(u);
  }
  std::sort(out.starting_high.begin(), out.starting_high.end());
  std::sort(out.starting_low.begin(), out.starting_low.end());
  return out;
}

// --- export ----------------------------------------------------------------

inline std::string cluster_report_csv(const ClusterModel& model, const std::vector<ArchetypeLabel>& labels) {
  std::string out = "user_id,cluster_id,archetype\n";
  std::vector<std::size_t> order(model.users.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return model.users[a] < model.users[b]; });
  for (auto i : order)
    out += csv::quote(model.users[i]) + ',' + std::to_string(model.assignment[i]) + ',' +
           std::string(to_string(labels[model.assignment[i]].label)) + '\n';
  return out;
}

inline std::string centroid_csv(const ClusterModel& model) {
  std::string out = "cluster_id,index,value\n";
  for (std::size_t c = 0; c < model.centroids.size(); ++c)
    for (std::size_t i = 0; i < model.centroids[c].size(); ++i)
      out += std::to_string(c) + ',' + std::to_string(i) + ',' + csv::num(model.centroids[c][i]) + '\n';
  return out;
}

inline nlohmann::ordered_json to_json(const ClusterModel& model, const std::vector<ArchetypeLabel>& labels) {
  nlohmann::ordered_json j;
  j["format"] = "volnet.cluster_model";
  j["version"] = 1;
  j["k"] = model.k;
  j["metric"] = to_string(model.metric);
  j["seed"] = model.seed;
  j["gamma"] = model.gamma;
  j["inertia"] = model.inertia;
  j["iterations"] = model.iterations;
  j["centroids"] = model.centroids;
  auto& lab = j["archetypes"] = nlohmann::ordered_json::array();
  for (const auto& l : labels)
    lab.push_back({{"label", to_string(l.label)}, {"initial_level", l.initial_level}, {"final_level", l.final_level}});
  auto& assign = j["assignment"] = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < model.users.size(); ++i) assign[model.users[i]] = model.assignment[i];
  return j;
}

}  // namespace volnet
