#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "volnet/csv.hpp"
#include "volnet/error.hpp"
#include "volnet/ingest.hpp"

namespace volnet {

using NodeIndex = std::size_t;

/// Directed arc to `node` carrying `weight` transactions.
struct Arc {
  NodeIndex node;
  std::size_t weight;
};

/// Directed edge by node index; weight is the transaction count.
struct Edge {
  NodeIndex src;
  NodeIndex dst;
  std::size_t weight;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Immutable directed weighted graph of transactions up to `horizon`.
/// Edges run lister -> collector, so out-degree counts listings and
/// in-degree counts pickups. Nodes are kept sorted by user id.
class TransactionGraph {
 public:
  TransactionGraph() = default;

  /// `nodes` need not be sorted; parallel edges are merged by summing
  /// weights. Throws on self-loops, zero weights or out-of-range indices.
  static TransactionGraph from_indexed(std::vector<UserId> nodes, std::vector<Edge> edges, Timestamp horizon = {}) {
    TransactionGraph g;
    g.horizon_ = horizon;
    const std::size_t n = nodes.size();
    std::vector<NodeIndex> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](NodeIndex a, NodeIndex b) { return nodes[a] < nodes[b]; });
    std::vector<NodeIndex> remap(n);
    g.nodes_.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
      remap[order[r]] = r;
      g.nodes_.push_back(std::move(nodes[order[r]]));
    }
    for (std::size_t r = 1; r < n; ++r)
      if (g.nodes_[r] == g.nodes_[r - 1]) throw Error("graph", "duplicate node id " + g.nodes_[r]);
    for (auto& e : edges) {
      if (e.src >= n || e.dst >= n) throw Error("graph", "edge endpoint out of range");
      if (e.src == e.dst) throw Error("graph", "self-loop on " + g.nodes_[remap[e.src]]);
      if (e.weight == 0) throw Error("graph", "edge weight must be >= 1");
      e.src = remap[e.src];
      e.dst = remap[e.dst];
    }
    std::sort(edges.begin(), edges.end(),
              [](const Edge& a, const Edge& b) { return a.src != b.src ? a.src < b.src : a.dst < b.dst; });
    for (const auto& e : edges) {
      if (!g.edges_.empty() && g.edges_.back().src == e.src && g.edges_.back().dst == e.dst)
        g.edges_.back().weight += e.weight;
      else
        g.edges_.push_back(e);
    }
    g.build_adjacency();
    return g;
  }

  /// Convenience constructor keyed by user id; edge endpoints are added to
  /// the node set when missing.
  static TransactionGraph from_edges(std::vector<UserId> nodes,
                                     const std::vector<std::tuple<UserId, UserId, std::size_t>>& edges,
                                     Timestamp horizon = {}) {
    std::unordered_map<UserId, NodeIndex> index;
    for (std::size_t i = 0; i < nodes.size(); ++i) index.emplace(nodes[i], i);
    auto idx = [&](const UserId& u) {
      auto [it, inserted] = index.emplace(u, nodes.size());
      if (inserted) nodes.push_back(u);
      return it->second;
    };
    std::vector<Edge> indexed;
    for (const auto& [a, b, w] : edges) {
      NodeIndex ia = idx(a);
      indexed.push_back({ia, idx(b), w});
    }
    return from_indexed(std::move(nodes), std::move(indexed), horizon);
  }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  const std::vector<UserId>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  Timestamp horizon() const { return horizon_; }

  std::optional<NodeIndex> index_of(const UserId& u) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), u);
    if (it == nodes_.end() || *it != u) return std::nullopt;
    return static_cast<NodeIndex>(it - nodes_.begin());
  }

  NodeIndex require(const UserId& u, const char* stage = "graph") const {
    auto i = index_of(u);
    if (!i) throw Error(stage, "unknown user " + u);
    return *i;
  }

  std::span<const Arc> out_arcs(NodeIndex v) const {
    return {out_arcs_.data() + out_off_[v], out_off_[v + 1] - out_off_[v]};
  }
  std::span<const Arc> in_arcs(NodeIndex v) const {
    return {in_arcs_.data() + in_off_[v], in_off_[v + 1] - in_off_[v]};
  }
  /// Undirected projection: neighbors sorted by index, weight = w(u,v) + w(v,u).
  std::span<const Arc> undirected(NodeIndex v) const {
    return {und_arcs_.data() + und_off_[v], und_off_[v + 1] - und_off_[v]};
  }

  std::size_t weight(NodeIndex src, NodeIndex dst) const {
    auto arcs = out_arcs(src);
    auto it = std::lower_bound(arcs.begin(), arcs.end(), dst, [](const Arc& a, NodeIndex n) { return a.node < n; });
    return it != arcs.end() && it->node == dst ? it->weight : 0;
  }

 private:
  void build_adjacency() {
    const std::size_t n = nodes_.size();
    out_off_.assign(n + 1, 0);
    in_off_.assign(n + 1, 0);
    for (const auto& e : edges_) {
      ++out_off_[e.src + 1];
      ++in_off_[e.dst + 1];
    }
    for (std::size_t i = 0; i < n; ++i) {
      out_off_[i + 1] += out_off_[i];
      in_off_[i + 1] += in_off_[i];
    }
    out_arcs_.resize(edges_.size());
    in_arcs_.resize(edges_.size());
    std::vector<std::size_t> oc(out_off_.begin(), out_off_.end() - 1), ic(in_off_.begin(), in_off_.end() - 1);
    // edges_ sorted by (src, dst): out lists come out sorted; in lists sorted by src.
    for (const auto& e : edges_) {
      out_arcs_[oc[e.src]++] = {e.dst, e.weight};
      in_arcs_[ic[e.dst]++] = {e.src, e.weight};
    }
    und_off_.assign(n + 1, 0);
    und_arcs_.clear();
    for (NodeIndex v = 0; v < n; ++v) {
      auto o = out_arcs(v), in = in_arcs(v);
      std::size_t a = 0, b = 0;
      while (a < o.size() || b < in.size()) {
        if (b == in.size() || (a < o.size() && o[a].node < in[b].node)) {
          und_arcs_.push_back(o[a++]);
        } else if (a == o.size() || in[b].node < o[a].node) {
          und_arcs_.push_back(in[b++]);
        } else {
          und_arcs_.push_back({o[a].node, o[a].weight + in[b].weight});
          ++a;
          ++b;
        }
      }
      und_off_[v + 1] = und_arcs_.size();
    }
  }

  std::vector<UserId> nodes_;
  std::vector<Edge> edges_;
  Timestamp horizon_{};
  std::vector<std::size_t> out_off_{0}, in_off_{0}, und_off_{0};
  std::vector<Arc> out_arcs_, in_arcs_, und_arcs_;
};

/// Graph of every transaction with collected_at <= until.
inline TransactionGraph build_graph(const TransactionLog& log, Timestamp until) {
  auto end = std::upper_bound(log.transactions.begin(), log.transactions.end(), until,
                              [](Timestamp t, const Transaction& tx) { return t < tx.collected_at; });
  std::unordered_map<UserId, NodeIndex> index;
  std::vector<UserId> nodes;
  auto idx = [&](const UserId& u) {
    auto [it, inserted] = index.emplace(u, nodes.size());
    if (inserted) nodes.push_back(u);
    return it->second;
  };
  std::unordered_map<std::uint64_t, std::size_t> weights;
  for (auto it = log.transactions.begin(); it != end; ++it) {
    std::uint64_t a = idx(it->lister_id), b = idx(it->collector_id);
    ++weights[(a << 32) | b];
  }
  std::vector<Edge> edges;
  edges.reserve(weights.size());
  for (const auto& [key, w] : weights) edges.push_back({key >> 32, key & 0xffffffffULL, w});
  return TransactionGraph::from_indexed(std::move(nodes), std::move(edges), until);
}

struct EgoNetwork {
  UserId ego;
  TransactionGraph graph;
};

/// Subgraph induced on {u} and every in- or out-neighbor of u: all edges
/// touching u plus all edges between two neighbors.
inline EgoNetwork ego_network(const TransactionGraph& g, const UserId& u) {
  NodeIndex c = g.require(u);
  std::vector<NodeIndex> members{c};
  for (const auto& a : g.undirected(c)) members.push_back(a.node);
  std::sort(members.begin(), members.end());
  std::vector<UserId> nodes;
  std::vector<NodeIndex> local(g.node_count(), SIZE_MAX);
  for (std::size_t i = 0; i < members.size(); ++i) {
    local[members[i]] = i;
    nodes.push_back(g.nodes()[members[i]]);
  }
  std::vector<Edge> edges;
  for (NodeIndex m : members)
    for (const auto& a : g.out_arcs(m))
      if (local[a.node] != SIZE_MAX) edges.push_back({local[m], local[a.node], a.weight});
  return {u, TransactionGraph::from_indexed(std::move(nodes), std::move(edges), g.horizon())};
}

/// |E| / (|V| (|V| - 1)) over distinct directed edges; 0 when |V| <= 1.
inline double density(const TransactionGraph& g) {
  const double n = static_cast<double>(g.node_count());
  if (g.node_count() <= 1) return 0.0;
  return static_cast<double>(g.edge_count()) / (n * (n - 1.0));
}

struct PageRankOptions {
  double damping = 0.85;
  double tol = 1e-9;
  std::size_t max_iter = 1000;
};

class PageRankNotConverged : public Error {
 public:
  PageRankNotConverged(std::vector<double> last, double residual)
      : Error("graph", fmt::format("pagerank did not converge (last L1 change {:.3e})", residual)),
        last_(std::move(last)) {}
  const std::vector<double>& last_iterate() const { return last_; }

 private:
  std::vector<double> last_;
};

/// Weighted PageRank by power iteration; dangling mass is spread uniformly.
/// Scores are aligned with g.nodes() and sum to 1.
inline std::vector<double> pagerank(const TransactionGraph& g, const PageRankOptions& opt = {}) {
  if (!(opt.damping > 0.0 && opt.damping < 1.0)) throw Error("graph", "damping must be in (0,1)");
  const std::size_t n = g.node_count();
  if (n == 0) return {};
  std::vector<double> out_w(n, 0.0);
  for (const auto& e : g.edges()) out_w[e.src] += static_cast<double>(e.weight);

  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> x(n, inv_n), next(n);
  double delta = 0.0;
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    double dangling = 0.0;
    for (std::size_t v = 0; v < n; ++v)
      if (out_w[v] == 0.0) dangling += x[v];
    const double base = (1.0 - opt.damping) * inv_n + opt.damping * dangling * inv_n;
    for (std::size_t v = 0; v < n; ++v) {
      double acc = 0.0;
      for (const auto& a : g.in_arcs(v)) acc += x[a.node] * static_cast<double>(a.weight) / out_w[a.node];
      next[v] = base + opt.damping * acc;
    }
    double sum = 0.0;
    for (double s : next) sum += s;
    delta = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      next[v] /= sum;
      delta += std::abs(next[v] - x[v]);
    }
    x.swap(next);
    if (delta < opt.tol) return x;
  }
  throw PageRankNotConverged(std::move(x), delta);
}

/// Closeness on the undirected unweighted projection, scaled by the
/// reachable fraction: ((r-1)/sum_d) * ((r-1)/(n-1)). Isolated nodes get 0.
inline double closeness_centrality(const TransactionGraph& g, NodeIndex v) {
  const std::size_t n = g.node_count();
  if (n <= 1) return 0.0;
  std::vector<std::size_t> dist(n, SIZE_MAX);
  std::deque<NodeIndex> queue{v};
  dist[v] = 0;
  std::size_t reached = 1, total = 0;
  while (!queue.empty()) {
    NodeIndex cur = queue.front();
    queue.pop_front();
    for (const auto& a : g.undirected(cur)) {
      if (dist[a.node] != SIZE_MAX) continue;
      dist[a.node] = dist[cur] + 1;
      total += dist[a.node];
      ++reached;
      queue.push_back(a.node);
    }
  }
  if (total == 0) return 0.0;
  const double r1 = static_cast<double>(reached - 1);
  return (r1 / static_cast<double>(total)) * (r1 / static_cast<double>(n - 1));
}

inline double closeness_centrality(const TransactionGraph& g, const UserId& v) {
  return closeness_centrality(g, g.require(v));
}

/// Local clustering coefficient on the undirected projection.
inline double clustering_coefficient(const TransactionGraph& g, NodeIndex v) {
  auto nbrs = g.undirected(v);
  const std::size_t k = nbrs.size();
  if (k < 2) return 0.0;
  std::size_t links = 0;
  auto is_nbr = [&](NodeIndex x) {
    return std::binary_search(nbrs.begin(), nbrs.end(), Arc{x, 0},
                              [](const Arc& a, const Arc& b) { return a.node < b.node; });
  };
  for (const auto& a : nbrs)
    for (const auto& b : g.undirected(a.node))
      if (b.node > a.node && is_nbr(b.node)) ++links;
  return 2.0 * static_cast<double>(links) / (static_cast<double>(k) * static_cast<double>(k - 1));
}

inline double clustering_coefficient(const TransactionGraph& g, const UserId& v) {
  return clustering_coefficient(g, g.require(v));
}

struct Degrees {
  std::size_t in_weighted = 0;
  std::size_t out_weighted = 0;
  std::size_t in_distinct = 0;
  std::size_t out_distinct = 0;

  friend bool operator==(const Degrees&, const Degrees&) = default;
};

inline Degrees degrees(const TransactionGraph& g, NodeIndex v) {
  Degrees d;
  for (const auto& a : g.in_arcs(v)) d.in_weighted += a.weight;
  for (const auto& a : g.out_arcs(v)) d.out_weighted += a.weight;
  d.in_distinct = g.in_arcs(v).size();
  d.out_distinct = g.out_arcs(v).size();
  return d;
}

inline Degrees degrees(const TransactionGraph& g, const UserId& v) { return degrees(g, g.require(v)); }

inline std::string edge_list_csv(const TransactionGraph& g) {
  std::string out = "src,dst,weight\n";
  for (const auto& e : g.edges())
    out += csv::quote(g.nodes()[e.src]) + ',' + csv::quote(g.nodes()[e.dst]) + ',' + std::to_string(e.weight) + '\n';
  return out;
}

/// Adds transactions in collected_at order and snapshots ego networks at
/// the current horizon without rebuilding the whole graph.
class IncrementalGraph {
 public:
  void add(const Transaction& t) {
    std::size_t a = intern(t.lister_id), b = intern(t.collector_id);
    ++out_[a][b];
    in_[b].insert(a);
    horizon_ = t.collected_at;
  }

  bool contains(const UserId& u) const { return index_.count(u) != 0; }

  /// Equal to ego_network(build_graph(log, horizon), u).graph.
  TransactionGraph ego_snapshot(const UserId& u, Timestamp horizon) const {
    auto it = index_.find(u);
    if (it == index_.end()) throw Error("graph", "unknown user " + u);
    std::size_t c = it->second;
    std::vector<std::size_t> members{c};
    for (const auto& [n, w] : out_[c]) members.push_back(n);
    for (std::size_t n : in_[c]) members.push_back(n);
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    std::unordered_map<std::size_t, NodeIndex> local;
    std::vector<UserId> nodes;
    for (std::size_t i = 0; i < members.size(); ++i) {
      local.emplace(members[i], i);
      nodes.push_back(names_[members[i]]);
    }
    std::vector<Edge> edges;
    for (std::size_t m : members)
      for (const auto& [n, w] : out_[m]) {
        auto l = local.find(n);
        if (l != local.end()) edges.push_back({local[m], l->second, w});
      }
    return TransactionGraph::from_indexed(std::move(nodes), std::move(edges), horizon);
  }

 private:
  std::size_t intern(const UserId& u) {
    auto [it, inserted] = index_.emplace(u, names_.size());
    if (inserted) {
      names_.push_back(u);
      out_.emplace_back();
      in_.emplace_back();
    }
    return it->second;
  }

  std::unordered_map<UserId, std::size_t> index_;
  std::vector<UserId> names_;
  std::vector<std::unordered_map<std::size_t, std::size_t>> out_;
  std::vector<std::unordered_set<std::size_t>> in_;
  Timestamp horizon_{};
};

}  // namespace volnet
