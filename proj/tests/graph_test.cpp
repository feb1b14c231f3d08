#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "test_util.hpp"
#include "volnet/graph.hpp"

using namespace volnet;
using namespace volnet::test;

namespace {

using Triples = std::vector<std::tuple<UserId, UserId, std::size_t>>;

TransactionGraph make(const std::vector<UserId>& nodes, const Triples& edges) {
  return TransactionGraph::from_edges(nodes, edges);
}

TEST(BuildGraph, CountsParallelTransactions) {
  auto log = make_log({tx("1", "A", "B", day(0)), tx("2", "A", "B", day(1)), tx("3", "B", "A", day(2))});
  auto g = build_graph(log, day(10));
  ASSERT_EQ(g.node_count(), 2u);
  EXPECT_EQ(g.edge_count(), 2u);
  EXPECT_EQ(g.weight(g.require("A"), g.require("B")), 2u);
  EXPECT_EQ(g.weight(g.require("B"), g.require("A")), 1u);
}

TEST(BuildGraph, HorizonIsInclusive) {
  auto log = make_log({tx("1", "A", "B", day(0)), tx("2", "B", "C", day(5))});
  EXPECT_EQ(build_graph(log, day(-1)).edge_count(), 0u);
  EXPECT_EQ(build_graph(log, day(0)).edge_count(), 1u);
  EXPECT_EQ(build_graph(log, day(5)).edge_count(), 2u);
}

TEST(BuildGraph, RejectsMalformedEdges) {
  EXPECT_THROW(make({"A"}, {{"A", "A", 1}}), Error);
  EXPECT_THROW(make({"A", "B"}, {{"A", "B", 0}}), Error);
  EXPECT_THROW(make({"A", "A"}, {}), Error);
}

TEST(EgoNetwork, Star) {
  auto g = make({}, {{"A", "B", 1}, {"A", "C", 1}, {"D", "B", 1}});
  auto e = ego_network(g, "A").graph;
  EXPECT_EQ(e.nodes(), (std::vector<UserId>{"A", "B", "C"}));
  EXPECT_EQ(e.edge_count(), 2u);
}

TEST(EgoNetwork, TriangleKeepsNeighborEdges) {
  auto g = make({}, {{"A", "B", 1}, {"B", "C", 1}, {"C", "A", 1}});
  auto e = ego_network(g, "A").graph;
  EXPECT_EQ(e.node_count(), 3u);
  EXPECT_EQ(e.edge_count(), 3u);
}

TEST(EgoNetwork, IsolatedNodeAndUnknownUser) {
  auto g = make({"Z"}, {{"A", "B", 1}});
  auto e = ego_network(g, "Z").graph;
  EXPECT_EQ(e.node_count(), 1u);
  EXPECT_EQ(e.edge_count(), 0u);
  EXPECT_THROW(ego_network(g, "nobody"), Error);
}

TEST(Density, Examples) {
  EXPECT_DOUBLE_EQ(density(make({}, {{"A", "B", 1}, {"B", "A", 1}, {"A", "C", 1}, {"C", "A", 1}, {"B", "C", 1},
                                      {"C", "B", 1}})),
                   1.0);
  EXPECT_NEAR(density(make({}, {{"A", "B", 1}, {"B", "C", 1}})), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(density(make({"A"}, {})), 0.0);
  EXPECT_EQ(density(TransactionGraph{}), 0.0);
}

// Dense Google-matrix power iteration, written independently of the CSR code.
std::vector<double> dense_pagerank(const TransactionGraph& g, double d = 0.85) {
  const std::size_t n = g.node_count();
  std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) w[i][j] = static_cast<double>(g.weight(i, j));
  std::vector<std::vector<double>> G(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double out = 0;
    for (double x : w[i]) out += x;
    for (std::size_t j = 0; j < n; ++j)
      G[j][i] = (1 - d) / n + d * (out > 0 ? w[i][j] / out : 1.0 / n);
  }
  std::vector<double> x(n, 1.0 / n), y(n);
  for (int it = 0; it < 5000; ++it) {
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = 0;
      for (std::size_t i = 0; i < n; ++i) y[j] += G[j][i] * x[i];
    }
    x = y;
  }
  return x;
}

// Stationary vector from the linear system (I - d S) x = (1 - d)/n 1.
std::vector<double> solved_pagerank(const TransactionGraph& g, double d = 0.85) {
  const auto n = static_cast<Eigen::Index>(g.node_count());
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double out = 0;
    for (Eigen::Index j = 0; j < n; ++j) out += static_cast<double>(g.weight(i, j));
    for (Eigen::Index j = 0; j < n; ++j) S(j, i) = out > 0 ? g.weight(i, j) / out : 1.0 / n;
  }
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - d * S;
  Eigen::VectorXd x = A.partialPivLu().solve(Eigen::VectorXd::Constant(n, (1 - d) / n));
  x /= x.sum();
  return {x.data(), x.data() + n};
}

TEST(PageRank, SymmetricCases) {
  auto two = pagerank(make({}, {{"A", "B", 1}, {"B", "A", 1}}));
  EXPECT_NEAR(two[0], 0.5, 1e-12);
  EXPECT_NEAR(two[1], 0.5, 1e-12);
  auto cyc = pagerank(make({}, {{"A", "B", 1}, {"B", "C", 1}, {"C", "A", 1}}));
  for (double v : cyc) EXPECT_NEAR(v, 1.0 / 3.0, 1e-12);
}

TEST(PageRank, StarMatchesDenseOracle) {
  auto g = make({}, {{"A", "B", 1}, {"A", "C", 1}});
  auto pr = pagerank(g);
  auto oracle = dense_pagerank(g);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(pr[i], oracle[i], 1e-8);
  EXPECT_NEAR(pr[1], pr[2], 1e-15);
  EXPECT_LT(pr[0], pr[1]);
}

TEST(PageRank, RandomWeightedGraphsMatchBothOracles) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 50)(rng);
    std::bernoulli_distribution has(std::uniform_real_distribution<double>(0.02, 0.3)(rng));
    std::uniform_int_distribution<std::size_t> wt(1, 5);
    Triples edges;
    std::vector<UserId> nodes;
    for (int i = 0; i < n; ++i) nodes.push_back("n" + std::to_string(i));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j && has(rng)) edges.emplace_back(nodes[i], nodes[j], wt(rng));
    auto g = make(nodes, edges);
    auto pr = pagerank(g);
    auto dense = dense_pagerank(g);
    auto solved = solved_pagerank(g);
    double sum = 0, linf_dense = 0, linf_solved = 0;
    for (std::size_t i = 0; i < pr.size(); ++i) {
      sum += pr[i];
      linf_dense = std::max(linf_dense, std::abs(pr[i] - dense[i]));
      linf_solved = std::max(linf_solved, std::abs(pr[i] - solved[i]));
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
    EXPECT_LE(linf_dense, 1e-8) << "n=" << n;
    EXPECT_LE(linf_solved, 1e-8) << "n=" << n;
  }
}

TEST(PageRank, NonConvergenceCarriesLastIterate) {
  auto g = make({}, {{"A", "B", 3}, {"B", "C", 1}, {"C", "A", 2}, {"A", "C", 1}});
  try {
    pagerank(g, {0.85, 1e-30, 3});
    FAIL() << "expected non-convergence";
  } catch (const PageRankNotConverged& e) {
    EXPECT_EQ(e.last_iterate().size(), 3u);
    EXPECT_EQ(e.stage(), "graph");
  }
  EXPECT_THROW(pagerank(g, {1.0, 1e-9, 100}), Error);
  EXPECT_TRUE(pagerank(TransactionGraph{}).empty());
}

TEST(Closeness, PathAndIsolated) {
  auto g = make({"Z"}, {{"A", "B", 1}, {"C", "B", 1}});
  // with isolated Z the reachable share scales the score
  EXPECT_NEAR(closeness_centrality(g, "B"), 1.0 * (2.0 / 3.0), 1e-12);
  EXPECT_EQ(closeness_centrality(g, "Z"), 0.0);
  auto p = make({}, {{"A", "B", 1}, {"B", "C", 1}});
  EXPECT_NEAR(closeness_centrality(p, "B"), 1.0, 1e-12);
  EXPECT_NEAR(closeness_centrality(p, "A"), 2.0 / 3.0, 1e-12);
}

TEST(Clustering, Examples) {
  auto tri = make({}, {{"A", "B", 1}, {"B", "C", 1}, {"C", "A", 1}});
  for (const auto& u : {"A", "B", "C"}) EXPECT_DOUBLE_EQ(clustering_coefficient(tri, u), 1.0);
  auto star = make({}, {{"A", "B", 1}, {"A", "C", 1}, {"D", "A", 1}});
  EXPECT_EQ(clustering_coefficient(star, "A"), 0.0);
  auto one = make({}, {{"A", "B", 1}, {"A", "C", 1}, {"D", "A", 1}, {"B", "C", 1}});
  EXPECT_NEAR(clustering_coefficient(one, "A"), 1.0 / 3.0, 1e-12);
  // reciprocal edges count once in the projection
  auto recip = make({}, {{"A", "B", 1}, {"B", "A", 1}, {"A", "C", 1}, {"C", "B", 2}});
  EXPECT_DOUBLE_EQ(clustering_coefficient(recip, "A"), 1.0);
}

TEST(Degrees, WeightedAndDistinct) {
  auto g = make({"Z"}, {{"A", "B", 2}, {"C", "A", 1}});
  auto d = degrees(g, "A");
  EXPECT_EQ(d.out_weighted, 2u);
  EXPECT_EQ(d.in_weighted, 1u);
  EXPECT_EQ(d.out_distinct, 1u);
  EXPECT_EQ(d.in_distinct, 1u);
  auto z = degrees(g, "Z");
  EXPECT_EQ(z.in_weighted + z.out_weighted + z.in_distinct + z.out_distinct, 0u);
}

TEST(IncrementalGraph, SnapshotsEqualRebuiltEgoNetworks) {
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> user(0, 19), d(0, 200);
  std::vector<Transaction> txs;
  for (int i = 0; i < 300; ++i) {
    int a = user(rng), b = user(rng);
    if (a != b) txs.push_back(tx(std::to_string(i), "u" + std::to_string(a), "u" + std::to_string(b), day(d(rng))));
  }
  auto log = make_log(txs);
  IncrementalGraph inc;
  std::size_t next = 0;
  for (int cut = 0; cut <= 200; cut += 25) {
    while (next < log.transactions.size() && log.transactions[next].collected_at <= day(cut))
      inc.add(log.transactions[next++]);
    auto full = build_graph(log, day(cut));
    for (const auto& u : full.nodes()) {
      auto a = inc.ego_snapshot(u, day(cut));
      auto b = ego_network(full, u).graph;
      EXPECT_EQ(a.nodes(), b.nodes());
      EXPECT_EQ(edge_list_csv(a), edge_list_csv(b));
    }
  }
}

}  // namespace
