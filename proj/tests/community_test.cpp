#include <gtest/gtest.h>

#include <random>

#include "volnet/community.hpp"

using namespace volnet;

namespace {

using Triples = std::vector<std::tuple<UserId, UserId, std::size_t>>;

Triples clique(const std::string& prefix, int n, int offset = 0) {
  Triples e;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      e.emplace_back(prefix + std::to_string(i + offset), prefix + std::to_string(j + offset), 1);
  return e;
}

Triples join(Triples a, const Triples& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// Q = 1/2m sum_ij (A_ij - k_i k_j / 2m) [c_i == c_j] over a dense symmetric matrix.
double oracle_modularity(const TransactionGraph& g, const std::vector<std::size_t>& c) {
  const std::size_t n = g.node_count();
  std::vector<std::vector<double>> A(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) A[i][j] = static_cast<double>(g.weight(i, j) + g.weight(j, i));
  std::vector<double> k(n, 0.0);
  double two_m = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      k[i] += A[i][j];
      two_m += A[i][j];
    }
  double q = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (c[i] == c[j]) q += A[i][j] - k[i] * k[j] / two_m;
  return q / two_m;
}

// Best modularity over all set partitions, enumerated as restricted growth strings.
double brute_force_max(const TransactionGraph& g, std::size_t* visited) {
  const std::size_t n = g.node_count();
  std::vector<std::size_t> a(n, 0), maxv(n, 0);
  double best = -1.0;
  *visited = 0;
  while (true) {
    ++*visited;
    best = std::max(best, modularity(g, a));
    std::size_t i = n - 1;
    while (i > 0 && a[i] == maxv[i - 1] + 1) --i;
    if (i == 0) break;
    ++a[i];
    maxv[i] = std::max(maxv[i - 1], a[i]);
    for (std::size_t j = i + 1; j < n; ++j) {
      a[j] = 0;
      maxv[j] = maxv[i];
    }
  }
  return best;
}

TEST(Modularity, MatchesDenseFormulaOnRandomPartitions) {
  std::mt19937 rng(2);
  Triples edges;
  std::uniform_int_distribution<int> node(0, 11);
  std::uniform_int_distribution<std::size_t> w(1, 4);
  for (int i = 0; i < 40; ++i) {
    int a = node(rng), b = node(rng);
    if (a != b) edges.emplace_back("v" + std::to_string(a), "v" + std::to_string(b), w(rng));
  }
  auto g = TransactionGraph::from_edges({}, edges);
  std::uniform_int_distribution<std::size_t> comm(0, 3);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::size_t> c(g.node_count());
    for (auto& x : c) x = comm(rng);
    EXPECT_NEAR(modularity(g, c), oracle_modularity(g, c), 1e-12);
  }
}

TEST(Modularity, Examples) {
  auto g = TransactionGraph::from_edges({}, join(clique("a", 4), clique("b", 4)));
  EXPECT_NEAR(modularity(g, std::vector<std::size_t>(8, 0)), 0.0, 1e-15);
  std::vector<std::size_t> by_clique(8);
  for (std::size_t i = 0; i < 8; ++i) by_clique[i] = g.nodes()[i][0] == 'a' ? 0 : 1;
  EXPECT_NEAR(modularity(g, by_clique), 0.5, 1e-12);
  auto single = TransactionGraph::from_edges({}, clique("a", 4));
  EXPECT_LT(modularity(single, std::vector<std::size_t>{0, 0, 1, 1}), 0.0);
  EXPECT_THROW(modularity(single, std::vector<std::size_t>{0, 0}), Error);
}

TEST(Louvain, DisconnectedCliquesSeparate) {
  auto g = TransactionGraph::from_edges({}, join(clique("a", 5), clique("b", 5)));
  auto p = louvain(g, {1});
  ASSERT_EQ(p.count, 2u);
  for (std::size_t i = 0; i < g.node_count(); ++i)
    for (std::size_t j = 0; j < g.node_count(); ++j)
      EXPECT_EQ(p.assignment[i] == p.assignment[j], g.nodes()[i][0] == g.nodes()[j][0]);
}

TEST(Louvain, BridgedCliquesReachBruteForceOptimum) {
  auto edges = join(clique("a", 5), clique("b", 5));
  edges.emplace_back("a0", "b0", 1);
  auto g = TransactionGraph::from_edges({}, edges);
  std::size_t visited = 0;
  const double best = brute_force_max(g, &visited);
  EXPECT_EQ(visited, 115975u);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto p = louvain(g, {seed});
    EXPECT_EQ(p.count, 2u);
    EXPECT_NEAR(p.modularity, best, 1e-12);
    EXPECT_GE(p.modularity, 0.95 * best);
  }
}

TEST(Louvain, TriangleStaysWhole) {
  auto p = louvain(TransactionGraph::from_edges({}, clique("t", 3)));
  EXPECT_EQ(p.count, 1u);
}

TEST(Louvain, DegenerateGraphs) {
  auto empty = louvain(TransactionGraph{});
  EXPECT_EQ(empty.count, 0u);
  auto isolated = louvain(TransactionGraph::from_edges({"x", "y", "z"}, {}));
  EXPECT_EQ(isolated.count, 3u);
  EXPECT_EQ(isolated.modularity, 0.0);
}

TEST(Louvain, LevelsNeverDecreaseModularityAndAreDeterministic) {
  std::mt19937 rng(9);
  Triples edges;
  for (int c = 0; c < 4; ++c) {
    std::uniform_int_distribution<int> in(0, 14);
    for (int i = 0; i < 60; ++i) {
      int a = in(rng), b = in(rng);
      if (a != b) edges.emplace_back(fmt::format("c{}_{}", c, a), fmt::format("c{}_{}", c, b), 1);
    }
  }
  std::uniform_int_distribution<int> any(0, 59);
  for (int i = 0; i < 12; ++i) {
    int a = any(rng), b = any(rng);
    if (a / 15 != b / 15) edges.emplace_back(fmt::format("c{}_{}", a / 15, a % 15), fmt::format("c{}_{}", b / 15, b % 15), 1);
  }
  auto g = TransactionGraph::from_edges({}, edges);
  auto p = louvain(g, {42});
  for (std::size_t i = 1; i < p.level_modularity.size(); ++i)
    EXPECT_GE(p.level_modularity[i], p.level_modularity[i - 1] - 1e-12);
  EXPECT_NEAR(p.modularity, oracle_modularity(g, p.assignment), 1e-12);
  EXPECT_GT(p.modularity, 0.5);
  auto again = louvain(g, {42});
  EXPECT_EQ(p.assignment, again.assignment);
  EXPECT_EQ(partition_csv(g, p), partition_csv(g, again));
  auto top = largest_communities(p, 2);
  ASSERT_EQ(top.size(), 2u);
  auto sizes = community_sizes(p);
  EXPECT_GE(sizes[top[0]], sizes[top[1]]);
}

}  // namespace
