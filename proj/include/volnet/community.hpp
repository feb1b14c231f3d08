#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "volnet/csv.hpp"
#include "volnet/error.hpp"
#include "volnet/graph.hpp"

namespace volnet {

/// Community per node, aligned with TransactionGraph::nodes(). Ids are
/// dense in [0, count).
struct Partition {
  std::vector<std::size_t> assignment;
  std::size_t count = 0;
  double modularity = 0.0;
  /// Modularity after each Louvain level, starting from singletons.
  std::vector<double> level_modularity;
};

/// Newman modularity on the weighted undirected projection:
/// Q = sum_c [ e_c / m - resolution * (d_c / 2m)^2 ].
inline double modularity(const TransactionGraph& g, const std::vector<std::size_t>& assignment,
                         double resolution = 1.0) {
  if (assignment.size() != g.node_count())
    throw Error("community", "partition covers " + std::to_string(assignment.size()) + " nodes, graph has " +
                                 std::to_string(g.node_count()));
  std::size_t count = 0;
  for (auto c : assignment) count = std::max(count, c + 1);
  std::vector<double> internal(count, 0.0), degree(count, 0.0);
  double m = 0.0;
  for (const auto& e : g.edges()) {
    const double w = static_cast<double>(e.weight);
    m += w;
    degree[assignment[e.src]] += w;
    degree[assignment[e.dst]] += w;
    if (assignment[e.src] == assignment[e.dst]) internal[assignment[e.src]] += w;
  }
  if (m == 0.0) return 0.0;
  double q = 0.0;
  for (std::size_t c = 0; c < count; ++c) {
    const double frac = degree[c] / (2.0 * m);
    q += internal[c] / m - resolution * frac * frac;
  }
  return q;
}

inline double modularity(const TransactionGraph& g, const Partition& p, double resolution = 1.0) {
  return modularity(g, p.assignment, resolution);
}

namespace detail {

/// Undirected weighted graph used between Louvain levels. `self[i]` is the
/// weight collapsed inside node i (each original edge counted once).
struct LevelGraph {
  std::vector<std::vector<std::pair<std::size_t, double>>> adj;
  std::vector<double> self;
  std::vector<double> degree;  // sum of adj weights + 2 * self
  double total = 0.0;          // 2m

  std::size_t size() const { return adj.size(); }
};

inline LevelGraph project(const TransactionGraph& g) {
  LevelGraph lg;
  const std::size_t n = g.node_count();
  lg.adj.resize(n);
  lg.self.assign(n, 0.0);
  lg.degree.assign(n, 0.0);
  for (NodeIndex v = 0; v < n; ++v)
    for (const auto& a : g.undirected(v)) {
      lg.adj[v].emplace_back(a.node, static_cast<double>(a.weight));
      lg.degree[v] += static_cast<double>(a.weight);
    }
  for (double d : lg.degree) lg.total += d;
  return lg;
}

inline LevelGraph aggregate(const LevelGraph& lg, const std::vector<std::size_t>& comm, std::size_t count) {
  LevelGraph out;
  out.adj.resize(count);
  out.self.assign(count, 0.0);
  out.degree.assign(count, 0.0);
  std::vector<std::unordered_map<std::size_t, double>> links(count);
  for (std::size_t i = 0; i < lg.size(); ++i) {
    const std::size_t ci = comm[i];
    out.self[ci] += lg.self[i];
    out.degree[ci] += lg.degree[i];
    for (const auto& [j, w] : lg.adj[i]) {
      const std::size_t cj = comm[j];
      if (ci == cj) {
        if (i < j) out.self[ci] += w;
      } else {
        links[ci][cj] += w;
      }
    }
  }
  for (std::size_t c = 0; c < count; ++c) {
    out.adj[c].assign(links[c].begin(), links[c].end());
    std::sort(out.adj[c].begin(), out.adj[c].end());
  }
  out.total = lg.total;
  return out;
}

inline double level_modularity(const LevelGraph& lg, const std::vector<std::size_t>& comm, std::size_t count,
                               double resolution) {
  if (lg.total == 0.0) return 0.0;
  std::vector<double> internal(count, 0.0), tot(count, 0.0);
  for (std::size_t i = 0; i < lg.size(); ++i) {
    internal[comm[i]] += lg.self[i];
    tot[comm[i]] += lg.degree[i];
    for (const auto& [j, w] : lg.adj[i])
      if (i < j && comm[i] == comm[j]) internal[comm[i]] += w;
  }
  const double m = lg.total / 2.0;
  double q = 0.0;
  for (std::size_t c = 0; c < count; ++c) q += internal[c] / m - resolution * (tot[c] / lg.total) * (tot[c] / lg.total);
  return q;
}

/// Renumbers ids densely in order of first appearance.
inline std::size_t renumber(std::vector<std::size_t>& comm) {
  std::unordered_map<std::size_t, std::size_t> ids;
  for (auto& c : comm) {
    auto [it, inserted] = ids.emplace(c, ids.size());
    c = it->second;
  }
  return ids.size();
}

/// Greedy single-node moves until a full pass moves nothing. Returns true
/// when at least one node changed community.
inline bool local_moves(const LevelGraph& lg, std::vector<std::size_t>& comm, double resolution,
                        std::mt19937_64& rng) {
  const std::size_t n = lg.size();
  std::vector<double> tot(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) tot[comm[i]] += lg.degree[i];
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<double> link(n, 0.0);
  std::vector<std::size_t> touched;
  constexpr double eps = 1e-12;
  bool any = false;
  for (bool moved = true; moved;) {
    moved = false;
    for (std::size_t i : order) {
      const double ki = lg.degree[i];
      if (ki == 0.0) continue;
      const std::size_t own = comm[i];
      touched.clear();
      for (const auto& [j, w] : lg.adj[i]) {
        if (link[comm[j]] == 0.0) touched.push_back(comm[j]);
        link[comm[j]] += w;
      }
      tot[own] -= ki;
      const double scale = resolution * ki / lg.total;
      const double stay = link[own] - scale * tot[own];
      std::sort(touched.begin(), touched.end());
      std::size_t best = own;
      double best_gain = stay;
      for (std::size_t c : touched) {
        if (c == own) continue;
        const double gain = link[c] - scale * tot[c];
        if (gain > best_gain + eps) {
          best = c;
          best_gain = gain;
        }
      }
      for (std::size_t c : touched) link[c] = 0.0;
      tot[best] += ki;
      if (best != own) {
        comm[i] = best;
        moved = true;
        any = true;
      }
    }
  }
  return any;
}

}  // namespace detail

struct LouvainOptions {
  std::uint64_t seed = 0;
  double resolution = 1.0;
  /// A level must raise modularity by at least this much to continue.
  double min_gain = 1e-7;
};

/// Louvain community detection on the weighted undirected projection.
/// Node visit order is shuffled from `seed`; among equally good moves the
/// lowest community id wins, and a node only leaves its community for a
/// strictly better one.
inline Partition louvain(const TransactionGraph& g, const LouvainOptions& opt = {}) {
  const std::size_t n = g.node_count();
  Partition p;
  p.assignment.resize(n);
  std::iota(p.assignment.begin(), p.assignment.end(), 0);
  p.count = n;
  if (n == 0) return p;

  std::mt19937_64 rng(opt.seed);
  detail::LevelGraph lg = detail::project(g);
  std::vector<std::size_t> comm(n);
  std::iota(comm.begin(), comm.end(), 0);
  double q_prev = detail::level_modularity(lg, comm, n, opt.resolution);
  p.level_modularity.push_back(q_prev);

  while (true) {
    std::vector<std::size_t> level(lg.size());
    std::iota(level.begin(), level.end(), 0);
    if (!detail::local_moves(lg, level, opt.resolution, rng)) break;
    std::size_t count = detail::renumber(level);
    for (auto& c : p.assignment) c = level[c];
    double q = detail::level_modularity(lg, level, count, opt.resolution);
    p.level_modularity.push_back(q);
    lg = detail::aggregate(lg, level, count);
    if (q - q_prev < opt.min_gain) break;
    q_prev = q;
  }
  p.count = detail::renumber(p.assignment);
  p.modularity = modularity(g, p.assignment, opt.resolution);
  return p;
}

/// Community sizes indexed by id.
inline std::vector<std::size_t> community_sizes(const Partition& p) {
  std::vector<std::size_t> sizes(p.count, 0);
  for (auto c : p.assignment) ++sizes[c];
  return sizes;
}

/// Community ids ordered by size descending, ties by id.
inline std::vector<std::size_t> largest_communities(const Partition& p, std::size_t top) {
  auto sizes = community_sizes(p);
  std::vector<std::size_t> ids(p.count);
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) { return sizes[a] > sizes[b]; });
  if (ids.size() > top) ids.resize(top);
  return ids;
}

inline std::string partition_csv(const TransactionGraph& g, const Partition& p) {
  std::string out = "user_id,community_id\n";
  for (std::size_t i = 0; i < g.node_count(); ++i)
    out += csv::quote(g.nodes()[i]) + ',' + std::to_string(p.assignment[i]) + '\n';
  return out;
}

}  // namespace volnet
