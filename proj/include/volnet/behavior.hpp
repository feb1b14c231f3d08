#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "volnet/csv.hpp"
#include "volnet/error.hpp"
#include "volnet/graph.hpp"
#include "volnet/ingest.hpp"

namespace volnet {

enum class Interval { weekly, monthly };

inline Seconds interval_length(Interval i) { return i == Interval::weekly ? kWeek : kMonth; }

inline std::string_view to_string(Interval i) { return i == Interval::weekly ? "weekly" : "monthly"; }

inline std::optional<Interval> parse_interval(std::string_view s) {
  if (s == "weekly") return Interval::weekly;
  if (s == "monthly") return Interval::monthly;
  return std::nullopt;
}

/// Donors-Ratio time series of one user. `raw` holds the per-window ratio
/// before imputation (absent for windows without transactions); `values`
/// is fully defined after gap filling.
struct DRSeries {
  UserId user;
  Interval interval = Interval::weekly;
  Timestamp t0{};
  std::vector<std::optional<double>> raw;
  std::vector<double> values;
  std::vector<bool> imputed_mask;
};

struct WindowCounts {
  std::size_t listings = 0;
  std::size_t pickups = 0;
};

/// listings / (listings + pickups) for transactions with collected_at in
/// [from, to). Absent when the user has no transactions in the window.
inline std::optional<double> donors_ratio(const UserId& u, Timestamp from, Timestamp to, const TransactionLog& log) {
  if (!(from < to)) throw Error("behavior", "donors_ratio window must satisfy t1 < t2");
  auto begin = std::lower_bound(log.transactions.begin(), log.transactions.end(), from,
                                [](const Transaction& t, Timestamp v) { return t.collected_at < v; });
  WindowCounts c;
  for (auto it = begin; it != log.transactions.end() && it->collected_at < to; ++it) {
    if (it->lister_id == u) ++c.listings;
    if (it->collector_id == u) ++c.pickups;
  }
  if (c.listings + c.pickups == 0) return std::nullopt;
  return static_cast<double>(c.listings) / static_cast<double>(c.listings + c.pickups);
}

/// Fills absent points: linear interpolation between the nearest defined
/// neighbors, nearest defined value at the boundaries. Needs >= 2 defined
/// points.
inline void impute_series(DRSeries& s) {
  const std::size_t n = s.raw.size();
  std::vector<std::size_t> defined;
  for (std::size_t i = 0; i < n; ++i)
    if (s.raw[i]) defined.push_back(i);
  if (defined.size() < 2)
    throw Error("behavior", fmt::format("user {}: only {} defined DR point(s), cannot impute", s.user, defined.size()));
  s.values.assign(n, 0.0);
  s.imputed_mask.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (s.raw[i]) {
      s.values[i] = *s.raw[i];
      continue;
    }
    s.imputed_mask[i] = true;
    auto next = std::lower_bound(defined.begin(), defined.end(), i);
    if (next == defined.begin()) {
      s.values[i] = *s.raw[defined.front()];
    } else if (next == defined.end()) {
      s.values[i] = *s.raw[defined.back()];
    } else {
      std::size_t hi = *next, lo = *(next - 1);
      double frac = static_cast<double>(i - lo) / static_cast<double>(hi - lo);
      s.values[i] = *s.raw[lo] + frac * (*s.raw[hi] - *s.raw[lo]);
    }
  }
}

/// Per-user DR series over [t0, t0 + horizon), one point per interval,
/// where t0 is the user's first transaction. Transactions are binned by
/// collected_at.
inline DRSeries dr_series(const UserId& u, const TransactionLog& log, Interval interval,
                          Seconds horizon = 365 * kDay) {
  const Seconds step = interval_length(interval);
  const std::size_t points = static_cast<std::size_t>(horizon / step);
  if (points == 0) throw Error("behavior", "horizon shorter than one interval");
  DRSeries s{u, interval, {}, {}, {}, {}};
  std::vector<WindowCounts> counts(points);
  bool seen = false;
  for (const auto& t : log.transactions) {
    const bool lists = t.lister_id == u, picks = t.collector_id == u;
    if (!lists && !picks) continue;
    if (!seen) {
      s.t0 = t.collected_at;
      seen = true;
    }
    auto idx = static_cast<std::size_t>((t.collected_at - s.t0) / step);
    if (idx >= points) break;
    if (lists) ++counts[idx].listings;
    if (picks) ++counts[idx].pickups;
  }
  if (!seen) throw Error("behavior", "user " + u + " has no transactions");
  s.raw.resize(points);
  for (std::size_t i = 0; i < points; ++i) {
    const auto total = counts[i].listings + counts[i].pickups;
    if (total > 0) s.raw[i] = static_cast<double>(counts[i].listings) / static_cast<double>(total);
  }
  impute_series(s);
  return s;
}

struct HubRuleParams {
  double multiplier = 1.0;
};

/// Nodes whose distinct degree (in + out) exceeds multiplier * average.
inline KeyUserSet detect_hubs(const TransactionGraph& g, const HubRuleParams& params = {}) {
  if (params.multiplier < 1.0) throw Error("behavior", "hub multiplier must be >= 1");
  KeyUserSet out{{}, KeyUserOrigin::hub_rule};
  if (g.node_count() == 0) return out;
  std::vector<double> deg(g.node_count());
  double sum = 0.0;
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    deg[v] = static_cast<double>(g.in_arcs(v).size() + g.out_arcs(v).size());
    sum += deg[v];
  }
  const double avg = sum / static_cast<double>(g.node_count());
  for (NodeIndex v = 0; v < g.node_count(); ++v)
    if (deg[v] > params.multiplier * avg) out.ids.push_back(g.nodes()[v]);
  return out;
}

inline std::string dr_series_csv(const std::vector<DRSeries>& series) {
  std::string out = "user_id,index,value,imputed\n";
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.values.size(); ++i)
      out += csv::quote(s.user) + ',' + std::to_string(i) + ',' + csv::num(s.values[i]) + ',' +
             (s.imputed_mask[i] ? "1" : "0") + '\n';
  return out;
}

}  // namespace volnet
