#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "volnet/csv.hpp"
#include "volnet/error.hpp"
#include "volnet/graph.hpp"
#include "volnet/ingest.hpp"
#include "volnet/tscluster.hpp"

namespace volnet {

inline constexpr std::size_t kFeatureCount = 15;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames{
    "nodes_number",  "edges_number",  "density",      "pagerank",      "closeness_centrality",
    "clustering_coefficient", "pickups_count", "percent_of_listing_items", "articles_count", "messages_count",
    "rating_current", "rating_count", "likes_count", "stories_count", "comments_count"};

inline std::size_t feature_index(std::string_view name) {
  for (std::size_t i = 0; i < kFeatureCount; ++i)
    if (kFeatureNames[i] == name) return i;
  throw Error("featureset", "unknown feature " + std::string(name));
}

enum class TrendLabel { stable = 0, changes = 1 };
enum class Case { starting_high, starting_low };

inline std::string_view to_string(TrendLabel l) { return l == TrendLabel::stable ? "stable" : "changes"; }
inline std::string_view to_string(Case c) { return c == Case::starting_high ? "starting_high" : "starting_low"; }

struct FeatureVector {
  UserId user;
  int cutoff_months = 3;
  std::array<double, kFeatureCount> features{};
  TrendLabel label = TrendLabel::stable;
  Case trend_case = Case::starting_high;

  double operator[](std::string_view name) const { return features[feature_index(name)]; }
};

/// Where PageRank, closeness and clustering are scored for the ego user.
enum class CentralityScope { ego, full };

struct NetworkFeatures {
  double nodes_number = 0, edges_number = 0, density = 0, pagerank = 0, closeness_centrality = 0,
         clustering_coefficient = 0, pickups_count = 0, percent_of_listing_items = 0;
};

/// Structural features of the ego user. With `full_graph` given, the three
/// centrality scores are taken in the full network instead of the ego graph.
inline NetworkFeatures extract_network_features(const EgoNetwork& ego, const TransactionGraph* full_graph = nullptr) {
  const TransactionGraph& g = ego.graph;
  const NodeIndex u = g.require(ego.ego, "featureset");
  NetworkFeatures f;
  f.nodes_number = static_cast<double>(g.node_count());
  f.edges_number = static_cast<double>(g.edge_count());
  f.density = density(g);
  const TransactionGraph& scored = full_graph ? *full_graph : g;
  const NodeIndex su = scored.require(ego.ego, "featureset");
  f.pagerank = pagerank(scored)[su];
  f.closeness_centrality = closeness_centrality(scored, su);
  f.clustering_coefficient = clustering_coefficient(scored, su);
  const Degrees d = degrees(g, u);
  f.pickups_count = static_cast<double>(d.in_weighted);
  if (d.in_weighted + d.out_weighted == 0)
    throw Error("featureset", "user " + ego.ego + " has no transactions before the cutoff");
  f.percent_of_listing_items =
      static_cast<double>(d.out_weighted) / static_cast<double>(d.out_weighted + d.in_weighted);
  return f;
}

struct RawFeatures {
  double articles_count = 0, messages_count = 0, rating_current = 0, rating_count = 0, likes_count = 0,
         stories_count = 0, comments_count = 0;
};

/// Activity counts of `u` with timestamp <= cutoff. rating_current is the
/// mean rating so far, 0 when there are none.
inline RawFeatures extract_raw_features(const EventLog& events, const UserId& u, Timestamp cutoff) {
  RawFeatures f;
  double rating_sum = 0.0;
  for (const auto& e : events.events) {
    if (e.at > cutoff) break;
    if (e.user_id != u) continue;
    switch (e.kind) {
      case EventKind::article: ++f.articles_count; break;
      case EventKind::message: ++f.messages_count; break;
      case EventKind::rating:
        ++f.rating_count;
        rating_sum += e.value.value_or(0.0);
        break;
      case EventKind::like: ++f.likes_count; break;
      case EventKind::story: ++f.stories_count; break;
      case EventKind::comment: ++f.comments_count; break;
    }
  }
  if (f.rating_count > 0) f.rating_current = rating_sum / f.rating_count;
  return f;
}

struct FeatureOptions {
  int cutoff_months = 3;
  CentralityScope scope = CentralityScope::ego;
};

inline Timestamp feature_cutoff(Timestamp t0, int months) { return t0 + months * kMonth; }

/// Clustered users with their archetype, as produced by the clustering step.
struct ArchetypeAssignment {
  std::unordered_map<UserId, Archetype> by_user;

  static ArchetypeAssignment from_model(const ClusterModel& model, const std::vector<ArchetypeLabel>& labels) {
    ArchetypeAssignment a;
    for (std::size_t i = 0; i < model.users.size(); ++i) a.by_user[model.users[i]] = labels[model.assignment[i]].label;
    return a;
  }
};

inline FeatureVector merge_features(const UserId& u, const NetworkFeatures& n, const RawFeatures& r, Archetype a,
                                    int cutoff_months) {
  FeatureVector fv;
  fv.user = u;
  fv.cutoff_months = cutoff_months;
  fv.features = {n.nodes_number,   n.edges_number,   n.density,
                 n.pagerank,       n.closeness_centrality, n.clustering_coefficient,
                 n.pickups_count,  n.percent_of_listing_items, r.articles_count,
                 r.messages_count, r.rating_current, r.rating_count,
                 r.likes_count,    r.stories_count,  r.comments_count};
  fv.trend_case = starts_high(a) ? Case::starting_high : Case::starting_low;
  fv.label = is_stable(a) ? TrendLabel::stable : TrendLabel::changes;
  return fv;
}

/// Feature vector of one clustered user from data up to t0(u) + cutoff.
inline FeatureVector assemble(const UserId& u, const TransactionLog& log, const EventLog& events,
                              const ArchetypeAssignment& archetypes, const FeatureOptions& opt = {}) {
  auto it = archetypes.by_user.find(u);
  if (it == archetypes.by_user.end()) throw Error("featureset", "user " + u + " is not in the cluster assignment");
  auto t0 = first_transaction(log, u);
  if (!t0) throw Error("featureset", "user " + u + " has no transactions");
  const Timestamp cutoff = feature_cutoff(*t0, opt.cutoff_months);
  auto full = build_graph(log, cutoff);
  auto ego = ego_network(full, u);
  auto net = extract_network_features(ego, opt.scope == CentralityScope::full ? &full : nullptr);
  auto raw = extract_raw_features(events, u, cutoff);
  return merge_features(u, net, raw, it->second, opt.cutoff_months);
}

/// Batch form of assemble(): one pass over the log, ego graphs snapshotted
/// at each user's cutoff. Output follows the order of `users`.
inline std::vector<FeatureVector> assemble_all(const std::vector<UserId>& users, const TransactionLog& log,
                                               const EventLog& events, const ArchetypeAssignment& archetypes,
                                               const FeatureOptions& opt = {}) {
  if (opt.scope == CentralityScope::full) {
    std::vector<FeatureVector> out;
    for (const auto& u : users) out.push_back(assemble(u, log, events, archetypes, opt));
    return out;
  }
  auto first = first_transactions(log);
  struct Job {
    std::size_t pos;
    Timestamp cutoff;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < users.size(); ++i) {
    if (!archetypes.by_user.count(users[i]))
      throw Error("featureset", "user " + users[i] + " is not in the cluster assignment");
    auto f = first.find(users[i]);
    if (f == first.end()) throw Error("featureset", "user " + users[i] + " has no transactions");
    jobs.push_back({i, feature_cutoff(f->second, opt.cutoff_months)});
  }
  std::stable_sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) { return a.cutoff < b.cutoff; });

  std::unordered_map<UserId, std::vector<const ActivityEvent*>> user_events;
  for (const auto& e : events.events) user_events[e.user_id].push_back(&e);

  std::vector<FeatureVector> out(users.size());
  IncrementalGraph graph;
  std::size_t next_tx = 0;
  for (const auto& job : jobs) {
    while (next_tx < log.transactions.size() && log.transactions[next_tx].collected_at <= job.cutoff)
      graph.add(log.transactions[next_tx++]);
    const UserId& u = users[job.pos];
    EgoNetwork ego{u, graph.ego_snapshot(u, job.cutoff)};
    auto net = extract_network_features(ego);
    EventLog mine;
    if (auto ev = user_events.find(u); ev != user_events.end())
      for (const auto* e : ev->second) mine.events.push_back(*e);
    auto raw = extract_raw_features(mine, u, job.cutoff);
    out[job.pos] = merge_features(u, net, raw, archetypes.by_user.at(u), opt.cutoff_months);
  }
  return out;
}

inline std::string feature_csv(const std::vector<FeatureVector>& rows) {
  std::string out = "user_id";
  for (auto n : kFeatureNames) out += ',' + std::string(n);
  out += ",label,case\n";
  for (const auto& r : rows) {
    out += csv::quote(r.user);
    for (double v : r.features) out += ',' + csv::num(v);
    out += ',' + std::string(to_string(r.label)) + ',' + std::string(to_string(r.trend_case)) + '\n';
  }
  return out;
}

}  // namespace volnet
