#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "volnet/behavior.hpp"
#include "volnet/community.hpp"
#include "volnet/csv.hpp"
#include "volnet/error.hpp"
#include "volnet/explain.hpp"
#include "volnet/featureset.hpp"
#include "volnet/graph.hpp"
#include "volnet/ingest.hpp"
#include "volnet/models.hpp"
#include "volnet/svg.hpp"
#include "volnet/tscluster.hpp"

namespace volnet {

namespace fs = std::filesystem;

struct PipelineConfig {
  fs::path transactions;
  std::optional<InputFormat> transactions_format;  // inferred from the extension when unset
  fs::path events;
  /// Predefined key-user list; empty selects the hub rule.
  fs::path key_users;
  double hub_multiplier = 1.0;
  bool strict = false;
  std::size_t min_transactions = 3;
  ActivityCriteria activity;
  Interval interval = Interval::weekly;
  std::size_t horizon_days = 365;
  std::size_t k_min = 4, k_max = 10;
  Metric metric = Metric::euclidean;
  double gamma = 1.0;
  std::size_t n_init = 3;
  bool compare_metrics = true;
  std::size_t top_communities = 2;
  int cutoff_months = 3;
  CentralityScope centrality_scope = CentralityScope::ego;
  std::vector<Algorithm> models{kAllAlgorithms.begin(), kAllAlgorithms.end()};
  std::size_t folds = 10;
  std::size_t shap_permutations = 200;
  std::size_t shap_background = 50;
  std::uint64_t seed = 7;
  fs::path out = "volnet_out";
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  return std::string(s.substr(b, s.find_last_not_of(" \t\r") - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw Error("config", fmt::format("{}: bad number '{}'", key, v));
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw Error("config", fmt::format("{}: bad number '{}'", key, v));
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error("config", fmt::format("{}: expected true or false, got '{}'", key, v));
}

}  // namespace detail

/// Applies one `key = value` setting. Relative paths resolve against `base`.
inline void apply_setting(PipelineConfig& c, const std::string& key, const std::string& v, const fs::path& base = {}) {
  using namespace detail;
  auto path = [&] { return fs::path(v).is_absolute() || base.empty() ? fs::path(v) : base / v; };
  if (key == "transactions") c.transactions = path();
  else if (key == "transactions_format") {
    if (v == "csv") c.transactions_format = InputFormat::csv;
    else if (v == "jsonl") c.transactions_format = InputFormat::jsonl;
    else throw Error("config", "transactions_format must be csv or jsonl");
  } else if (key == "events") c.events = path();
  else if (key == "key_users") c.key_users = v == "hub" ? fs::path{} : path();
  else if (key == "hub_multiplier") c.hub_multiplier = parse_real(key, v);
  else if (key == "strict") c.strict = parse_bool(key, v);
  else if (key == "min_transactions") c.min_transactions = parse_number<std::size_t>(key, v);
  else if (key == "min_span_days") c.activity.min_span = parse_number<std::int64_t>(key, v) * kDay;
  else if (key == "min_listing_weeks") c.activity.min_listing_weeks = parse_number<std::size_t>(key, v);
  else if (key == "interval") {
    auto i = parse_interval(v);
    if (!i) throw Error("config", "interval must be weekly or monthly");
    c.interval = *i;
  } else if (key == "horizon_days") c.horizon_days = parse_number<std::size_t>(key, v);
  else if (key == "k_range") {
    auto dash = v.find('-');
    if (dash == std::string::npos) throw Error("config", "k_range must look like 4-10");
    c.k_min = parse_number<std::size_t>(key, trim(v.substr(0, dash)));
    c.k_max = parse_number<std::size_t>(key, trim(v.substr(dash + 1)));
  } else if (key == "metric") {
    auto m = parse_metric(v);
    if (!m) throw Error("config", "metric must be euclidean, dtw or softdtw");
    c.metric = *m;
  } else if (key == "gamma") c.gamma = parse_real(key, v);
  else if (key == "n_init") c.n_init = parse_number<std::size_t>(key, v);
  else if (key == "compare_metrics") c.compare_metrics = parse_bool(key, v);
  else if (key == "top_communities") c.top_communities = parse_number<std::size_t>(key, v);
  else if (key == "cutoff_months") c.cutoff_months = parse_number<int>(key, v);
  else if (key == "centrality_scope") {
    if (v == "ego") c.centrality_scope = CentralityScope::ego;
    else if (v == "full") c.centrality_scope = CentralityScope::full;
    else throw Error("config", "centrality_scope must be ego or full");
  } else if (key == "models") {
    c.models.clear();
    std::stringstream ss(v);
    for (std::string name; std::getline(ss, name, ',');) {
      auto a = parse_algorithm(trim(name));
      if (!a) throw Error("config", fmt::format("unknown model '{}'", trim(name)));
      c.models.push_back(*a);
    }
  } else if (key == "folds") c.folds = parse_number<std::size_t>(key, v);
  else if (key == "shap_permutations") c.shap_permutations = parse_number<std::size_t>(key, v);
  else if (key == "shap_background") c.shap_background = parse_number<std::size_t>(key, v);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "out") c.out = path();
  else throw Error("config", fmt::format("unknown key '{}'", key));
}

inline PipelineConfig parse_config(std::string_view text, const fs::path& base = {}) {
  PipelineConfig c;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw Error("config", fmt::format("line {}: expected key = value", line_no));
    apply_setting(c, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)), base);
  }
  return c;
}

inline PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("config", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

inline void validate(const PipelineConfig& c) {
  auto need = [](const fs::path& p, const char* what) {
    if (p.empty()) throw Error("config", fmt::format("{} path is not set", what));
    if (!fs::exists(p)) throw Error("config", fmt::format("{} path {} does not exist", what, p.string()));
  };
  need(c.transactions, "transactions");
  need(c.events, "events");
  if (!c.key_users.empty()) need(c.key_users, "key_users");
  if (c.k_min < 2 || c.k_min > c.k_max) throw Error("config", "k_range must satisfy 2 <= k_min <= k_max");
  if (c.folds < 2) throw Error("config", "folds must be >= 2");
  if (c.models.empty()) throw Error("config", "model list is empty");
  if (c.cutoff_months < 1) throw Error("config", "cutoff_months must be >= 1");
  if (c.min_transactions == 0) throw Error("config", "min_transactions must be >= 1");
  if (c.shap_permutations < 2) throw Error("config", "shap_permutations must be >= 2");
  if (c.shap_background == 0) throw Error("config", "shap_background must be >= 1");
}

enum class Stage { ingest, communities, behavior, cluster, features, train, explain };

/// Collects written files and warnings for the run manifest.
class RunOutput {
 public:
  explicit RunOutput(fs::path root, bool quiet = false) : root_(std::move(root)), quiet_(quiet) {}

  void write(const std::string& rel, const std::string& text) {
    csv::write_text(root_ / rel, text, "cli");
    files_.emplace_back(rel, text.size());
  }
  void warn(std::string msg) {
    if (!quiet_) std::cerr << "warning: " << msg << '\n';
    warnings_.push_back(std::move(msg));
  }
  const fs::path& root() const { return root_; }
  const std::vector<std::pair<std::string, std::size_t>>& files() const { return files_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  void write_manifest(const PipelineConfig& c, Stage last) {
    nlohmann::ordered_json j;
    j["format"] = "volnet.manifest";
    j["version"] = 1;
    j["seed"] = c.seed;
    j["last_stage"] = static_cast<int>(last);
    auto& f = j["files"] = nlohmann::ordered_json::array();
    for (const auto& [p, n] : files_) f.push_back({{"path", p}, {"bytes", n}});
    j["warnings"] = warnings_;
    csv::write_text(root_ / "manifest.json", j.dump(2) + '\n', "cli");
  }

 private:
  fs::path root_;
  bool quiet_;
  std::vector<std::pair<std::string, std::size_t>> files_;
  std::vector<std::string> warnings_;
};

struct ScopeResult {
  std::string name;
  std::vector<UserId> users;
  std::vector<DRSeries> series;
  SelectKResult selection;
  std::vector<ArchetypeLabel> labels;
};

struct CaseResult {
  std::string scope;
  Case trend_case;
  std::vector<EvalReport> reports;
  Algorithm best = Algorithm::gbdt;
  std::optional<GlobalImportance> importance;
};

struct RunResult {
  TransactionLog log;
  EventLog events;
  std::optional<TransactionGraph> graph;
  std::optional<Partition> partition;
  KeyUserSet key_users;
  std::vector<ScopeResult> scopes;
  std::vector<CaseResult> cases;
};

/// Best mean accuracy; ties prefer gbdt, then the earlier model.
inline Algorithm best_model(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw Error("models", "no evaluation reports");
  const EvalReport* best = &reports.front();
  for (const auto& r : reports) {
    if (r.mean_accuracy > best->mean_accuracy ||
        (r.mean_accuracy == best->mean_accuracy && r.algorithm == Algorithm::gbdt))
      best = &r;
  }
  return best->algorithm;
}

namespace detail {

inline InputFormat infer_format(const PipelineConfig& c) {
  if (c.transactions_format) return *c.transactions_format;
  return c.transactions.extension() == ".jsonl" ? InputFormat::jsonl : InputFormat::csv;
}

inline std::string ch_scores_csv(const SelectKResult& s) {
  std::string out = "k,calinski_harabasz,selected\n";
  for (const auto& [k, v] : s.scores)
    out += std::to_string(k) + ',' + csv::num(v) + ',' + (k == s.k ? "1" : "0") + '\n';
  return out;
}

inline std::vector<svg::Line> centroid_lines(const ClusterModel& m, const std::vector<ArchetypeLabel>& labels) {
  std::vector<std::size_t> sizes(m.k, 0);
  for (auto a : m.assignment) ++sizes[a];
  std::vector<svg::Line> lines;
  for (std::size_t c = 0; c < m.k; ++c)
    lines.push_back({fmt::format("cluster {} ({}, n={})", c, to_string(labels[c].label), sizes[c]), m.centroids[c]});
  return lines;
}

inline void run_ingest(const PipelineConfig& c, RunResult& r, RunOutput& out) {
  auto tx = parse_transactions(c.transactions, infer_format(c), c.strict);
  auto ev = parse_events(c.events, c.strict);
  std::string report = "source,row,message\n";
  for (const auto& e : tx.errors) report += "transactions," + std::to_string(e.row) + ',' + csv::quote(e.message) + '\n';
  for (const auto& e : ev.errors) report += "events," + std::to_string(e.row) + ',' + csv::quote(e.message) + '\n';
  if (!tx.errors.empty() || !ev.errors.empty())
    out.warn(fmt::format("{} malformed rows skipped", tx.errors.size() + ev.errors.size()));
  r.log = filter_min_transactions(tx.value, c.min_transactions);
  r.events = std::move(ev.value);
  if (r.log.transactions.empty()) throw Error("ingest", "no transactions left after filtering");
  out.write("ingest/transactions.csv", transactions_to_csv(r.log));
  out.write("ingest/rejected_rows.csv", report);
}

inline void run_communities(const PipelineConfig& c, RunResult& r, RunOutput& out) {
  r.graph = build_graph(r.log, Timestamp::max());
  r.partition = louvain(*r.graph, {c.seed, 1.0, 1e-7});
  out.write("communities/partition.csv", partition_csv(*r.graph, *r.partition));
  auto sizes = community_sizes(*r.partition);
  std::string summary = "community_id,size\n";
  for (std::size_t i = 0; i < sizes.size(); ++i) summary += std::to_string(i) + ',' + std::to_string(sizes[i]) + '\n';
  out.write("communities/sizes.csv", summary);
}

inline void run_behavior(const PipelineConfig& c, RunResult& r, RunOutput& out) {
  KeyUserSet key = c.key_users.empty() ? detect_hubs(*r.graph, {c.hub_multiplier}) : read_key_users(c.key_users);
  r.key_users = select_active_key_users(r.log, key, c.activity);
  if (r.key_users.ids.empty())
    throw Error("behavior", fmt::format("none of the {} key users pass the activity criteria", key.ids.size()));
  std::string key_csv = "user_id\n";
  for (const auto& u : r.key_users.ids) key_csv += csv::quote(u) + '\n';
  out.write("behavior/key_users.csv", key_csv);

  std::map<UserId, std::size_t> community;
  for (std::size_t i = 0; i < r.graph->node_count(); ++i) community[r.graph->nodes()[i]] = r.partition->assignment[i];
  r.scopes.push_back({"all", r.key_users.ids, {}, {}, {}});
  for (auto cid : largest_communities(*r.partition, c.top_communities)) {
    ScopeResult s{fmt::format("community_{}", cid), {}, {}, {}, {}};
    for (const auto& u : r.key_users.ids)
      if (community.at(u) == cid) s.users.push_back(u);
    r.scopes.push_back(std::move(s));
  }
  const Seconds horizon = static_cast<std::int64_t>(c.horizon_days) * kDay;
  std::vector<DRSeries> all;
  for (const auto& u : r.key_users.ids) {
    try {
      all.push_back(dr_series(u, r.log, c.interval, horizon));
    } catch (const Error& e) {
      out.warn(fmt::format("key user dropped: {}", e.what()));
    }
  }
  if (all.empty()) throw Error("behavior", "no key user has a usable DR series");
  std::map<UserId, const DRSeries*> by_user;
  for (const auto& s : all) by_user[s.user] = &s;
  for (auto& scope : r.scopes) {
    std::erase_if(scope.users, [&](const UserId& u) { return !by_user.count(u); });
    for (const auto& u : scope.users) scope.series.push_back(*by_user.at(u));
  }
  out.write("behavior/dr_series.csv", dr_series_csv(all));
}

inline void run_cluster(const PipelineConfig& c, RunResult& r, RunOutput& out) {
  KMeansOptions opt;
  opt.metric = c.metric;
  opt.seed = c.seed;
  opt.n_init = c.n_init;
  opt.gamma = c.gamma;
  std::vector<ScopeResult> kept;
  for (auto& scope : r.scopes) {
    if (scope.series.size() <= c.k_min) {
      if (scope.name == "all")
        throw Error("cluster", fmt::format("{} key users are too few for k_min={}", scope.series.size(), c.k_min));
      out.warn(fmt::format("scope {} skipped: {} key users", scope.name, scope.series.size()));
      continue;
    }
    auto data = series_values(scope.series);
    scope.selection = select_k(data, c.k_min, c.k_max, opt);
    scope.selection.model.users = scope.users;
    scope.labels = label_archetypes(scope.selection.model);
    const auto& m = scope.selection.model;
    const std::string dir = "cluster/" + scope.name + "/";
    out.write(dir + "ch_scores.csv", ch_scores_csv(scope.selection));
    out.write(dir + "archetypes.csv", cluster_report_csv(m, scope.labels));
    out.write(dir + "centroids.csv", centroid_csv(m));
    out.write(dir + "cluster_model.json", to_json(m, scope.labels).dump(2) + '\n');
    out.write(dir + "centroids.svg",
              svg::line_panels(fmt::format("DR centroids, scope {}, k={}", scope.name, m.k),
                               {{std::string(to_string(c.metric)), centroid_lines(m, scope.labels)}}));
    if (c.compare_metrics && scope.name == "all") {
      std::vector<svg::Panel> panels;
      for (auto metric : {Metric::euclidean, Metric::dtw, Metric::softdtw}) {
        KMeansOptions o = opt;
        o.metric = metric;
        o.k = m.k;
        auto alt = kmeans_ts(data, o);
        panels.push_back({std::string(to_string(metric)), centroid_lines(alt, label_archetypes(alt))});
      }
      out.write(dir + "metric_comparison.svg",
                svg::line_panels(fmt::format("Centroids by distance, k={}", m.k), panels));
    }
    kept.push_back(std::move(scope));
  }
  r.scopes = std::move(kept);
}

inline void run_models(const PipelineConfig& c, RunResult& r, RunOutput& out, Stage last) {
  const std::vector<std::string> names(kFeatureNames.begin(), kFeatureNames.end());
  for (const auto& scope : r.scopes) {
    const auto& model = scope.selection.model;
    auto archetypes = ArchetypeAssignment::from_model(model, scope.labels);
    auto split = split_cases(model, scope.labels);
    const std::string dir = "models/" + scope.name + "/";
    auto features = assemble_all(scope.users, r.log, r.events, archetypes, {c.cutoff_months, c.centrality_scope});
    out.write(dir + "features.csv", feature_csv(features));
    if (last == Stage::features) continue;

    std::map<UserId, const FeatureVector*> fv;
    for (const auto& f : features) fv[f.user] = &f;
    std::string eval = eval_report_csv_header();
    for (auto trend_case : {Case::starting_high, Case::starting_low}) {
      const auto& users = trend_case == Case::starting_high ? split.starting_high : split.starting_low;
      const std::string case_name(to_string(trend_case));
      if (users.size() < 2 * c.folds) {
        out.warn(fmt::format("scope {} case {} skipped: {} users < 2*folds", scope.name, case_name, users.size()));
        continue;
      }
      FeatureMatrix X;
      LabelVector y;
      for (const auto& u : users) {
        const auto& f = *fv.at(u);
        X.emplace_back(f.features.begin(), f.features.end());
        y.push_back(static_cast<int>(f.label));
      }
      CaseResult cr{scope.name, trend_case, {}, Algorithm::gbdt, std::nullopt};
      for (auto alg : c.models) {
        CvOptions cv;
        cv.folds = c.folds;
        cv.seed = c.seed;
        cr.reports.push_back(kfold_cv(alg, X, y, cv));
        eval += eval_report_csv_row(cr.reports.back(), case_name);
      }
      cr.best = best_model(cr.reports);
      if (last == Stage::explain) {
        auto clf = train(cr.best, X, y, {}, c.seed, names);
        for (const auto& w : clf.warnings) out.warn(fmt::format("scope {} case {}: {}", scope.name, case_name, w));
        out.write(dir + case_name + "_model.json", to_json(clf).dump(2) + '\n');
        auto background = background_sample(X, c.shap_background, c.seed);
        auto g = global_importance(scorer_of(clf), X, background, names, c.seed, c.shap_permutations);
        for (std::size_t i = 0; i < users.size(); ++i) g.rows[i].user = users[i];
        out.write(dir + case_name + "_attributions.csv", attribution_csv(g.rows, names));
        out.write(dir + case_name + "_importance.csv", importance_csv(g.ranking));
        out.write(dir + case_name + "_importance.svg",
                  svg::importance_bars(fmt::format("mean |phi|, {} ({}, {})", to_string(cr.best), scope.name,
                                                   case_name),
                                       g.ranking));
        cr.importance = std::move(g);
      }
      r.cases.push_back(std::move(cr));
    }
    out.write(dir + "evaluation.csv", eval);
  }
}

}  // namespace detail

/// Runs every stage up to and including `last`, writing outputs under
/// cfg.out and a manifest listing them.
inline RunResult run_pipeline(const PipelineConfig& cfg, Stage last = Stage::explain, bool quiet = false) {
  validate(cfg);
  RunOutput out(cfg.out, quiet);
  RunResult r;
  detail::run_ingest(cfg, r, out);
  if (last >= Stage::communities) detail::run_communities(cfg, r, out);
  if (last >= Stage::behavior) detail::run_behavior(cfg, r, out);
  if (last >= Stage::cluster) detail::run_cluster(cfg, r, out);
  if (last >= Stage::features) detail::run_models(cfg, r, out, last);
  out.write_manifest(cfg, last);
  return r;
}

inline RunResult run_method1(const PipelineConfig& cfg, bool quiet = false) {
  return run_pipeline(cfg, Stage::cluster, quiet);
}

}  // namespace volnet
