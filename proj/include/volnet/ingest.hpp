#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "volnet/csv.hpp"
#include "volnet/error.hpp"
#include "volnet/timeutil.hpp"

namespace volnet {

using UserId = std::string;

/// One listed item handed from `lister_id` to `collector_id`.
struct Transaction {
  std::string item_id;
  UserId lister_id;
  UserId collector_id;
  Timestamp listed_at;
  Timestamp collected_at;

  friend bool operator==(const Transaction&, const Transaction&) = default;
};

enum class EventKind { article, message, rating, like, story, comment };

inline constexpr std::array<EventKind, 6> kAllEventKinds{EventKind::article, EventKind::message,
                                                         EventKind::rating,  EventKind::like,
                                                         EventKind::story,   EventKind::comment};

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::article: return "article";
    case EventKind::message: return "message";
    case EventKind::rating: return "rating";
    case EventKind::like: return "like";
    case EventKind::story: return "story";
    case EventKind::comment: return "comment";
  }
  return "?";
}

inline std::optional<EventKind> parse_event_kind(std::string_view s) {
  for (auto k : kAllEventKinds)
    if (to_string(k) == s) return k;
  return std::nullopt;
}

/// `value` is present exactly when kind == rating, in [0, 10].
struct ActivityEvent {
  UserId user_id;
  EventKind kind;
  Timestamp at;
  std::optional<double> value;

  friend bool operator==(const ActivityEvent&, const ActivityEvent&) = default;
};

/// Transactions sorted by collected_at; `users` is the sorted set of every
/// lister and collector.
struct TransactionLog {
  std::vector<Transaction> transactions;
  std::vector<UserId> users;

  bool has_user(const UserId& u) const { return std::binary_search(users.begin(), users.end(), u); }
};

/// Events sorted by timestamp.
struct EventLog {
  std::vector<ActivityEvent> events;
};

enum class KeyUserOrigin { predefined, hub_rule };

struct KeyUserSet {
  std::vector<UserId> ids;  // sorted, unique
  KeyUserOrigin origin = KeyUserOrigin::predefined;

  bool contains(const UserId& u) const { return std::binary_search(ids.begin(), ids.end(), u); }
};

enum class InputFormat { csv, jsonl };

struct RowError {
  std::size_t row;  // 1-based line number in the file
  std::string message;
};

template <class T>
struct ParseResult {
  T value;
  std::vector<RowError> errors;
  std::size_t duplicates_dropped = 0;
};

inline constexpr std::string_view kTransactionHeader = "item_id,lister_id,collector_id,listed_at,collected_at";
inline constexpr std::string_view kEventHeader = "user_id,kind,at,value";

/// Sorts transactions by collected_at (stable) and rebuilds the user set.
inline TransactionLog make_log(std::vector<Transaction> txs) {
  std::stable_sort(txs.begin(), txs.end(),
                   [](const Transaction& a, const Transaction& b) { return a.collected_at < b.collected_at; });
  std::set<UserId> users;
  for (const auto& t : txs) {
    users.insert(t.lister_id);
    users.insert(t.collector_id);
  }
  return TransactionLog{std::move(txs), {users.begin(), users.end()}};
}

inline EventLog make_event_log(std::vector<ActivityEvent> events) {
  std::stable_sort(events.begin(), events.end(),
                   [](const ActivityEvent& a, const ActivityEvent& b) { return a.at < b.at; });
  return EventLog{std::move(events)};
}

namespace detail {

inline std::optional<std::string> validate(const Transaction& t) {
  if (t.item_id.empty() || t.lister_id.empty() || t.collector_id.empty()) return "empty identifier";
  if (t.lister_id == t.collector_id) return "lister_id equals collector_id";
  if (t.collected_at < t.listed_at) return "collected_at precedes listed_at";
  return std::nullopt;
}

inline std::optional<Transaction> transaction_from_fields(const std::vector<std::string>& f, std::string& err) {
  if (f.size() != 5) {
    err = fmt::format("expected 5 fields, found {}", f.size());
    return std::nullopt;
  }
  auto listed = parse_rfc3339(f[3]);
  auto collected = parse_rfc3339(f[4]);
  if (!listed || !collected) {
    err = "invalid RFC 3339 timestamp";
    return std::nullopt;
  }
  Transaction t{f[0], f[1], f[2], *listed, *collected};
  if (auto bad = validate(t)) {
    err = *bad;
    return std::nullopt;
  }
  return t;
}

inline void finish_parse(ParseResult<TransactionLog>& result, std::vector<Transaction> rows, bool strict,
                         const std::filesystem::path& path) {
  if (strict && !result.errors.empty()) {
    std::string rows_list;
    for (const auto& e : result.errors) {
      if (!rows_list.empty()) rows_list += ", ";
      rows_list += std::to_string(e.row) + " (" + e.message + ")";
    }
    throw Error("ingest", fmt::format("{} malformed row(s) in {}: {}", result.errors.size(), path.string(), rows_list));
  }
  std::vector<Transaction> unique;
  unique.reserve(rows.size());
  std::set<std::tuple<std::string, std::string, std::string, Timestamp, Timestamp>> seen;
  for (auto& t : rows) {
    auto key = std::make_tuple(t.item_id, t.lister_id, t.collector_id, t.listed_at, t.collected_at);
    if (!seen.insert(key).second) {
      ++result.duplicates_dropped;
      continue;
    }
    unique.push_back(std::move(t));
  }
  result.value = make_log(std::move(unique));
}

}  // namespace detail

/// Reads a transaction file. Malformed rows are reported in `errors`; with
/// `strict` they abort the parse instead. Exact duplicate rows are dropped.
inline ParseResult<TransactionLog> parse_transactions(const std::filesystem::path& path, InputFormat format,
                                                      bool strict = false) {
  auto lines = csv::read_lines(path, "ingest");
  ParseResult<TransactionLog> result;
  std::vector<Transaction> rows;

  if (format == InputFormat::csv) {
    if (lines.empty() || lines[0] != kTransactionHeader)
      throw Error("ingest", fmt::format("{}: header must be '{}'", path.string(), kTransactionHeader));
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      std::string err;
      if (auto t = detail::transaction_from_fields(csv::split_line(lines[i]), err))
        rows.push_back(std::move(*t));
      else
        result.errors.push_back({i + 1, err});
    }
  } else {
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      std::string err;
      auto j = nlohmann::json::parse(lines[i], nullptr, false);
      if (j.is_discarded() || !j.is_object()) {
        result.errors.push_back({i + 1, "invalid JSON object"});
        continue;
      }
      std::vector<std::string> fields;
      bool ok = true;
      for (const char* key : {"item_id", "lister_id", "collector_id", "listed_at", "collected_at"}) {
        if (!j.contains(key) || !j[key].is_string()) {
          ok = false;
          err = std::string("missing string key '") + key + "'";
          break;
        }
        fields.push_back(j[key].get<std::string>());
      }
      std::optional<Transaction> t;
      if (ok) t = detail::transaction_from_fields(fields, err);
      if (t)
        rows.push_back(std::move(*t));
      else
        result.errors.push_back({i + 1, err});
    }
  }
  detail::finish_parse(result, std::move(rows), strict, path);
  return result;
}

inline std::string transactions_to_csv(const TransactionLog& log) {
  std::string out{kTransactionHeader};
  out.push_back('\n');
  for (const auto& t : log.transactions) {
    out += csv::quote(t.item_id) + ',' + csv::quote(t.lister_id) + ',' + csv::quote(t.collector_id) + ',' +
           format_rfc3339(t.listed_at) + ',' + format_rfc3339(t.collected_at) + '\n';
  }
  return out;
}

inline std::string transactions_to_jsonl(const TransactionLog& log) {
  std::string out;
  for (const auto& t : log.transactions) {
    nlohmann::ordered_json j;
    j["item_id"] = t.item_id;
    j["lister_id"] = t.lister_id;
    j["collector_id"] = t.collector_id;
    j["listed_at"] = format_rfc3339(t.listed_at);
    j["collected_at"] = format_rfc3339(t.collected_at);
    out += j.dump() + '\n';
  }
  return out;
}

inline ParseResult<EventLog> parse_events(const std::filesystem::path& path, bool strict = false) {
  auto lines = csv::read_lines(path, "ingest");
  if (lines.empty() || lines[0] != kEventHeader)
    throw Error("ingest", fmt::format("{}: header must be '{}'", path.string(), kEventHeader));
  ParseResult<EventLog> result;
  std::vector<ActivityEvent> events;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto f = csv::split_line(lines[i]);
    auto fail = [&](std::string msg) { result.errors.push_back({i + 1, std::move(msg)}); };
    if (f.size() != 4) {
      fail(fmt::format("expected 4 fields, found {}", f.size()));
      continue;
    }
    auto kind = parse_event_kind(f[1]);
    auto at = parse_rfc3339(f[2]);
    if (f[0].empty()) {
      fail("empty user_id");
      continue;
    }
    if (!kind) {
      fail("unknown event kind '" + f[1] + "'");
      continue;
    }
    if (!at) {
      fail("invalid RFC 3339 timestamp");
      continue;
    }
    std::optional<double> value;
    if (*kind == EventKind::rating) {
      double v = 0;
      auto res = std::from_chars(f[3].data(), f[3].data() + f[3].size(), v);
      if (f[3].empty() || res.ec != std::errc{} || res.ptr != f[3].data() + f[3].size() || v < 0 || v > 10) {
        fail("rating value must be a number in [0,10]");
        continue;
      }
      value = v;
    } else if (!f[3].empty()) {
      fail("value is only allowed for rating events");
      continue;
    }
    events.push_back({f[0], *kind, *at, value});
  }
  if (strict && !result.errors.empty()) {
    std::string rows_list;
    for (const auto& e : result.errors) rows_list += (rows_list.empty() ? "" : ", ") + std::to_string(e.row);
    throw Error("ingest", fmt::format("{} malformed event row(s) in {}: {}", result.errors.size(), path.string(),
                                      rows_list));
  }
  result.value = make_event_log(std::move(events));
  return result;
}

inline std::string events_to_csv(const EventLog& log) {
  std::string out{kEventHeader};
  out.push_back('\n');
  for (const auto& e : log.events) {
    out += csv::quote(e.user_id) + ',' + std::string(to_string(e.kind)) + ',' + format_rfc3339(e.at) + ',' +
           (e.value ? fmt::format("{}", *e.value) : std::string{}) + '\n';
  }
  return out;
}

/// One user id per line; blank lines and '#' comments ignored.
inline KeyUserSet read_key_users(const std::filesystem::path& path) {
  std::set<UserId> ids;
  for (auto& line : csv::read_lines(path, "ingest")) {
    if (line.empty() || line[0] == '#') continue;
    ids.insert(line);
  }
  return {{ids.begin(), ids.end()}, KeyUserOrigin::predefined};
}

/// Per-user transaction count, listings and pickups counted jointly.
inline std::unordered_map<UserId, std::size_t> transaction_counts(const TransactionLog& log) {
  std::unordered_map<UserId, std::size_t> counts;
  for (const auto& t : log.transactions) {
    ++counts[t.lister_id];
    ++counts[t.collector_id];
  }
  return counts;
}

/// Single pass: users with fewer than `min_count` transactions are removed,
/// along with every transaction that touches one of them. Counts are taken
/// on the input log; the result is not re-filtered.
inline TransactionLog filter_min_transactions(const TransactionLog& log, std::size_t min_count) {
  if (min_count == 0) throw Error("ingest", "min_count must be >= 1");
  if (min_count == 1) return log;
  auto counts = transaction_counts(log);
  std::vector<Transaction> kept;
  for (const auto& t : log.transactions)
    if (counts[t.lister_id] >= min_count && counts[t.collector_id] >= min_count) kept.push_back(t);
  return make_log(std::move(kept));
}

struct ActivityCriteria {
  Seconds min_span = 365 * kDay;
  std::size_t min_listing_weeks = 6;
};

/// Keeps key users whose first-to-last transaction span reaches `min_span`
/// and who listed in at least `min_listing_weeks` distinct ISO weeks.
inline KeyUserSet select_active_key_users(const TransactionLog& log, const KeyUserSet& key,
                                          const ActivityCriteria& criteria = {}) {
  struct Activity {
    Timestamp first = Timestamp::max();
    Timestamp last = Timestamp::min();
    std::unordered_set<int> listing_weeks;
  };
  std::unordered_map<UserId, Activity> act;
  auto touch = [&](const UserId& u, Timestamp at) -> Activity* {
    if (!key.contains(u)) return nullptr;
    auto& a = act[u];
    a.first = std::min(a.first, at);
    a.last = std::max(a.last, at);
    return &a;
  };
  for (const auto& t : log.transactions) {
    if (auto* a = touch(t.lister_id, t.collected_at)) a->listing_weeks.insert(iso_week_key(t.listed_at));
    touch(t.collector_id, t.collected_at);
  }
  KeyUserSet out{{}, key.origin};
  for (const auto& u : key.ids) {
    auto it = act.find(u);
    if (it == act.end()) continue;
    const auto& a = it->second;
    if (a.last - a.first >= criteria.min_span && a.listing_weeks.size() >= criteria.min_listing_weeks)
      out.ids.push_back(u);
  }
  return out;
}

/// Timestamp (collected_at) of the user's first transaction.
inline std::optional<Timestamp> first_transaction(const TransactionLog& log, const UserId& u) {
  for (const auto& t : log.transactions)
    if (t.lister_id == u || t.collector_id == u) return t.collected_at;
  return std::nullopt;
}

inline std::unordered_map<UserId, Timestamp> first_transactions(const TransactionLog& log) {
  std::unordered_map<UserId, Timestamp> first;
  for (const auto& t : log.transactions) {
    first.try_emplace(t.lister_id, t.collected_at);
    first.try_emplace(t.collector_id, t.collected_at);
  }
  return first;
}

}  // namespace volnet
