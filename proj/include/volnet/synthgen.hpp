#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "volnet/csv.hpp"
#include "volnet/error.hpp"
#include "volnet/ingest.hpp"
#include "volnet/tscluster.hpp"

namespace volnet {

struct SynthConfig {
  std::size_t n_heroes = 200;
  std::map<Archetype, double> archetype_mix{
      {Archetype::FPD, 0.25}, {Archetype::SAD, 0.25}, {Archetype::FAD, 0.25}, {Archetype::SPD, 0.25}};
  std::size_t n_regulars_per_hero = 15;
  std::size_t weeks = 52;
  std::size_t community_count = 4;
  double noise_sd = 0.05;
  /// Log-rate effect per event kind: users whose trend changes get
  /// rate * exp(effect), stable users rate * exp(-effect).
  std::map<EventKind, double> feature_signal{{EventKind::message, -0.8}};
  std::uint64_t seed = 7;

  std::size_t transactions_per_week = 20;
  std::size_t regular_transactions = 4;
  double home_community_share = 0.9;
  std::size_t trend_break_week = 12;
  /// Mean events per week per hero before the signal is applied.
  std::map<EventKind, double> base_event_rate{{EventKind::article, 3.0}, {EventKind::message, 3.0},
                                              {EventKind::rating, 0.5},  {EventKind::like, 2.0},
                                              {EventKind::story, 0.3},   {EventKind::comment, 1.0}};
  Timestamp start = std::chrono::sys_days{std::chrono::year{2018} / 1 / 1};
};

struct SynthTruth {
  std::map<UserId, Archetype> archetype;  // heroes only
  std::map<UserId, std::size_t> community;
};

struct SynthData {
  TransactionLog log;
  EventLog events;
  KeyUserSet heroes;
  SynthTruth truth;
};

/// Start and end DR level of each archetype template.
inline std::pair<double, double> archetype_levels(Archetype a) {
  switch (a) {
    case Archetype::FPD: return {0.9, 0.2};
    case Archetype::SAD: return {0.85, 0.85};
    case Archetype::FAD: return {0.15, 0.8};
    case Archetype::SPD: return {0.15, 0.15};
  }
  return {0, 0};
}

/// Template DR of an archetype in week `w`: flat until the break week, then
/// a linear ramp reaching the end level at week `weeks - 1`, flat after.
inline double archetype_template(Archetype a, std::size_t w, std::size_t weeks, std::size_t break_week = 12) {
  auto [lo, hi] = archetype_levels(a);
  if (w <= break_week || weeks <= break_week + 1) return w <= break_week ? lo : hi;
  if (w >= weeks - 1) return hi;
  const double frac = static_cast<double>(w - break_week) / static_cast<double>(weeks - 1 - break_week);
  return lo + frac * (hi - lo);
}

/// Hero counts per archetype by largest remainder. Throws when the mix does
/// not sum to 1 or a positive share would get no heroes.
inline std::map<Archetype, std::size_t> archetype_counts(const SynthConfig& cfg) {
  double total = 0.0;
  for (const auto& [a, p] : cfg.archetype_mix) {
    if (p < 0.0) throw Error("synth", "archetype proportions must be non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error("synth", fmt::format("archetype mix sums to {}, not 1", total));
  std::map<Archetype, std::size_t> counts;
  std::vector<std::pair<double, Archetype>> remainders;
  std::size_t assigned = 0;
  for (const auto& [a, p] : cfg.archetype_mix) {
    const double exact = p * static_cast<double>(cfg.n_heroes);
    counts[a] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += counts[a];
    remainders.emplace_back(exact - static_cast<double>(counts[a]), a);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](auto& x, auto& y) { return x.first > y.first; });
  for (std::size_t i = 0; assigned < cfg.n_heroes; ++i, ++assigned) ++counts[remainders[i % remainders.size()].second];
  for (const auto& [a, p] : cfg.archetype_mix)
    if (p > 0.0 && counts[a] == 0)
      throw Error("synth", fmt::format("mix gives {} a positive share but no heroes", to_string(a)));
  return counts;
}

/// Seeded synthetic volunteer network with planted archetypes and
/// communities. Heroes only trade with regulars, so each hero's realised DR
/// per week is round(p * n) / n for the jittered template level p.
inline SynthData generate(const SynthConfig& cfg) {
  if (cfg.weeks < 8) throw Error("synth", "weeks must be >= 8");
  if (cfg.n_heroes == 0) throw Error("synth", "n_heroes must be positive");
  if (cfg.community_count == 0) throw Error("synth", "community_count must be positive");
  if (cfg.n_regulars_per_hero < 2) throw Error("synth", "n_regulars_per_hero must be >= 2");
  if (cfg.transactions_per_week == 0) throw Error("synth", "transactions_per_week must be positive");
  if (cfg.noise_sd < 0.0) throw Error("synth", "noise_sd must be non-negative");
  auto counts = archetype_counts(cfg);

  std::mt19937_64 rng(cfg.seed);
  std::vector<Archetype> kinds;
  for (const auto& [a, c] : counts) kinds.insert(kinds.end(), c, a);
  std::shuffle(kinds.begin(), kinds.end(), rng);

  SynthData out;
  std::vector<std::vector<UserId>> pool(cfg.community_count);
  std::vector<UserId> heroes;
  for (std::size_t h = 0; h < cfg.n_heroes; ++h) {
    UserId id = fmt::format("h{:05d}", h);
    const std::size_t c = h % cfg.community_count;
    heroes.push_back(id);
    out.truth.archetype[id] = kinds[h];
    out.truth.community[id] = c;
    for (std::size_t r = 0; r < cfg.n_regulars_per_hero; ++r) {
      UserId rid = fmt::format("r{:07d}", h * cfg.n_regulars_per_hero + r);
      out.truth.community[rid] = c;
      pool[c].push_back(rid);
    }
  }

  std::vector<Transaction> txs;
  std::size_t item = 0;
  auto next_item = [&] { return fmt::format("i{:08d}", item++); };
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pick_from = [&](const std::vector<UserId>& v) -> const UserId& {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  auto counterparty = [&](std::size_t home) -> const UserId& {
    if (cfg.community_count == 1 || unit(rng) < cfg.home_community_share) return pick_from(pool[home]);
    std::size_t other = std::uniform_int_distribution<std::size_t>(0, cfg.community_count - 2)(rng);
    if (other >= home) ++other;
    return pick_from(pool[other]);
  };
  const std::int64_t week_s = kWeek.count();
  std::uniform_int_distribution<std::int64_t> in_week(0, week_s - 1);
  std::uniform_int_distribution<std::int64_t> lead(3600, 48 * 3600);
  std::uniform_int_distribution<std::int64_t> start_week(0, 25);
  std::normal_distribution<double> jitter(0.0, 1.0);
  // Activity continues past the analysed weeks so the one-year span holds.
  const std::size_t active_weeks = std::max<std::size_t>(cfg.weeks, 53) + 2;
  Timestamp last_time = cfg.start;
  std::vector<Timestamp> hero_start(cfg.n_heroes);

  for (std::size_t h = 0; h < cfg.n_heroes; ++h) {
    const UserId& hero = heroes[h];
    const std::size_t home = h % cfg.community_count;
    const Timestamp start = cfg.start + Seconds{start_week(rng) * week_s};
    hero_start[h] = start;
    for (std::size_t w = 0; w < active_weeks; ++w) {
      double p = archetype_template(kinds[h], std::min(w, cfg.weeks - 1), cfg.weeks, cfg.trend_break_week);
      if (cfg.noise_sd > 0.0) p += cfg.noise_sd * jitter(rng);
      p = std::clamp(p, 0.0, 1.0);
      const auto n = cfg.transactions_per_week;
      const auto listings = static_cast<std::size_t>(std::lround(p * static_cast<double>(n)));
      for (std::size_t i = 0; i < n; ++i) {
        const std::int64_t offset = (w == 0 && i == 0) ? 0 : in_week(rng);
        const Timestamp collected = start + Seconds{static_cast<std::int64_t>(w) * week_s + offset};
        const Timestamp listed = collected - Seconds{lead(rng)};
        const UserId& other = counterparty(home);
        if (i < listings)
          txs.push_back({next_item(), hero, other, listed, collected});
        else
          txs.push_back({next_item(), other, hero, listed, collected});
        last_time = std::max(last_time, collected);
      }
    }
  }

  const std::int64_t span_s = (last_time - cfg.start).count();
  std::uniform_int_distribution<std::int64_t> anytime(0, std::max<std::int64_t>(span_s, 1));
  for (std::size_t c = 0; c < cfg.community_count; ++c)
    for (const auto& reg : pool[c])
      for (std::size_t k = 0; k < cfg.regular_transactions; ++k) {
        const UserId* other = &counterparty(c);
        while (*other == reg) other = &counterparty(c);
        const Timestamp collected = cfg.start + Seconds{anytime(rng)};
        txs.push_back({next_item(), reg, *other, collected - Seconds{lead(rng)}, collected});
      }

  std::vector<ActivityEvent> events;
  std::uniform_real_distribution<double> rating(6.0, 10.0);
  for (std::size_t h = 0; h < cfg.n_heroes; ++h) {
    const double sign = is_stable(kinds[h]) ? -1.0 : 1.0;
    for (auto kind : kAllEventKinds) {
      auto base = cfg.base_event_rate.find(kind);
      if (base == cfg.base_event_rate.end() || base->second <= 0.0) continue;
      auto effect = cfg.feature_signal.find(kind);
      const double rate = base->second * std::exp(sign * (effect == cfg.feature_signal.end() ? 0.0 : effect->second));
      std::poisson_distribution<int> per_week(rate);
      for (std::size_t w = 0; w < active_weeks; ++w) {
        const int count = per_week(rng);
        for (int e = 0; e < count; ++e) {
          const Timestamp at = hero_start[h] + Seconds{static_cast<std::int64_t>(w) * week_s + in_week(rng)};
          std::optional<double> value;
          if (kind == EventKind::rating) value = std::round(rating(rng) * 10.0) / 10.0;
          events.push_back({heroes[h], kind, at, value});
        }
      }
    }
  }

  out.log = make_log(std::move(txs));
  out.events = make_event_log(std::move(events));
  std::sort(heroes.begin(), heroes.end());
  out.heroes = {heroes, KeyUserOrigin::predefined};
  return out;
}

inline std::string truth_csv(const SynthData& d) {
  std::string out = "user_id,archetype,community\n";
  for (const auto& [u, c] : d.truth.community) {
    auto a = d.truth.archetype.find(u);
    out += u + ',' + (a == d.truth.archetype.end() ? std::string{} : std::string(to_string(a->second))) + ',' +
           std::to_string(c) + '\n';
  }
  return out;
}

struct SynthPaths {
  std::filesystem::path transactions, transactions_jsonl, events, heroes, truth;
};

inline SynthPaths write_synth(const SynthData& d, const std::filesystem::path& dir) {
  SynthPaths p{dir / "transactions.csv", dir / "transactions.jsonl", dir / "events.csv", dir / "heroes.txt",
               dir / "truth.csv"};
  csv::write_text(p.transactions, transactions_to_csv(d.log), "synth");
  csv::write_text(p.transactions_jsonl, transactions_to_jsonl(d.log), "synth");
  csv::write_text(p.events, events_to_csv(d.events), "synth");
  std::string heroes;
  for (const auto& h : d.heroes.ids) heroes += h + '\n';
  csv::write_text(p.heroes, heroes, "synth");
  csv::write_text(p.truth, truth_csv(d), "synth");
  return p;
}

/// Adjusted Rand index of two labelings of the same elements (aligned by
/// position). Returns 1 when both labelings are trivial in the same way.
inline double adjusted_rand_index(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  if (a.size() != b.size()) throw Error("synth", "labelings cover different element sets");
  const std::size_t n = a.size();
  if (n < 2) return 1.0;
  std::map<std::pair<std::size_t, std::size_t>, double> cells;
  std::map<std::size_t, double> rows, cols;
  for (std::size_t i = 0; i < n; ++i) {
    cells[{a[i], b[i]}] += 1;
    rows[a[i]] += 1;
    cols[b[i]] += 1;
  }
  auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0, sa = 0, sb = 0;
  for (const auto& [k, v] : cells) index += c2(v);
  for (const auto& [k, v] : rows) sa += c2(v);
  for (const auto& [k, v] : cols) sb += c2(v);
  const double expected = sa * sb / c2(static_cast<double>(n));
  const double max_index = (sa + sb) / 2.0;
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

/// ARI over users present in both maps; throws when the key sets differ.
template <class A, class B>
double adjusted_rand_index(const std::map<UserId, A>& a, const std::map<UserId, B>& b) {
  if (a.size() != b.size()) throw Error("synth", "labelings cover different element sets");
  std::map<A, std::size_t> ida;
  std::map<B, std::size_t> idb;
  std::vector<std::size_t> la, lb;
  for (const auto& [u, x] : a) {
    auto it = b.find(u);
    if (it == b.end()) throw Error("synth", "labelings cover different element sets");
    la.push_back(ida.try_emplace(x, ida.size()).first->second);
    lb.push_back(idb.try_emplace(it->second, idb.size()).first->second);
  }
  return adjusted_rand_index(la, lb);
}

}  // namespace volnet
