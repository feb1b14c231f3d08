#include <gtest/gtest.h>

#include <fstream>

#include "test_util.hpp"
#include "volnet/pipeline.hpp"
#include "volnet/synthgen.hpp"

using namespace volnet;
using namespace volnet::test;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(Config, ParsesAllKeys) {
  auto c = parse_config(
      "# comment\n"
      "transactions = t.jsonl\n"
      "events = e.csv   # trailing\n"
      "key_users = hub\n"
      "hub_multiplier = 2.5\n"
      "min_transactions = 4\n"
      "min_span_days = 300\n"
      "min_listing_weeks = 3\n"
      "interval = monthly\n"
      "horizon_days = 360\n"
      "k_range = 3-6\n"
      "metric = dtw\n"
      "gamma = 0.5\n"
      "n_init = 2\n"
      "compare_metrics = false\n"
      "top_communities = 1\n"
      "cutoff_months = 2\n"
      "centrality_scope = full\n"
      "models = gbdt, naive_bayes\n"
      "folds = 5\n"
      "shap_permutations = 50\n"
      "shap_background = 10\n"
      "seed = 11\n"
      "out = res\n",
      "/base");
  EXPECT_EQ(c.transactions, fs::path("/base/t.jsonl"));
  EXPECT_TRUE(c.key_users.empty());
  EXPECT_EQ(c.hub_multiplier, 2.5);
  EXPECT_EQ(c.activity.min_span, 300 * kDay);
  EXPECT_EQ(c.interval, Interval::monthly);
  EXPECT_EQ(c.k_min, 3u);
  EXPECT_EQ(c.k_max, 6u);
  EXPECT_EQ(c.metric, Metric::dtw);
  EXPECT_FALSE(c.compare_metrics);
  EXPECT_EQ(c.centrality_scope, CentralityScope::full);
  EXPECT_EQ(c.models, (std::vector<Algorithm>{Algorithm::gbdt, Algorithm::naive_bayes}));
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.out, fs::path("/base/res"));
  EXPECT_EQ(detail::infer_format(c), InputFormat::jsonl);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_config("colour = red\n"), Error);
  EXPECT_THROW(parse_config("seed\n"), Error);
  EXPECT_THROW(parse_config("seed = -3\n"), Error);
  EXPECT_THROW(parse_config("metric = manhattan\n"), Error);
  EXPECT_THROW(parse_config("models = gbdt,xgboost\n"), Error);
  EXPECT_THROW(parse_config("k_range = 4\n"), Error);
  try {
    validate(parse_config("transactions = /no/such/file.csv\nevents = /no/such/e.csv\n"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.stage(), "config");
  }
  EXPECT_THROW(load_config("/no/such/volnet.conf"), Error);
}

TEST(BestModel, TiesPreferGbdt) {
  EvalReport a, b, c;
  a.algorithm = Algorithm::naive_bayes;
  a.mean_accuracy = 0.9;
  b.algorithm = Algorithm::gbdt;
  b.mean_accuracy = 0.9;
  c.algorithm = Algorithm::linear_svm;
  c.mean_accuracy = 0.8;
  EXPECT_EQ(best_model({a, b, c}), Algorithm::gbdt);
  a.mean_accuracy = 0.91;
  EXPECT_EQ(best_model({a, b, c}), Algorithm::naive_bayes);
  EXPECT_THROW(best_model({}), Error);
}

fs::path synth_config(const std::string& name, std::size_t heroes, const std::string& extra = "") {
  SynthConfig sc;
  sc.n_heroes = heroes;
  sc.n_regulars_per_hero = 6;
  sc.seed = 5;
  auto dir = scratch(name);
  write_synth(generate(sc), dir);
  return write_file(dir / "volnet.conf", "transactions = transactions.csv\nevents = events.csv\n"
                                         "key_users = heroes.txt\nout = results\nshap_permutations = 40\n" +
                                             extra);
}

TEST(Pipeline, EndToEndOnSyntheticData) {
  auto cfg = load_config(synth_config("pipe_e2e", 80));
  auto r = run_pipeline(cfg, Stage::explain, true);
  ASSERT_FALSE(r.scopes.empty());
  EXPECT_EQ(r.scopes[0].name, "all");
  EXPECT_EQ(r.scopes[0].selection.k, 4u);
  auto archetypes = slurp(cfg.out / "cluster/all/archetypes.csv");
  EXPECT_EQ(std::count(archetypes.begin(), archetypes.end(), '\n'), 81);
  std::set<std::string> labels;
  for (const auto& l : r.scopes[0].labels) labels.insert(std::string(to_string(l.label)));
  EXPECT_EQ(labels.size(), 4u);

  auto ch = slurp(cfg.out / "cluster/all/ch_scores.csv");
  EXPECT_EQ(std::count(ch.begin(), ch.end(), '\n'), 8);

  auto eval = slurp(cfg.out / "models/all/evaluation.csv");
  EXPECT_EQ(std::count(eval.begin(), eval.end(), '\n'), 1 + 6 * 2);
  auto attributions = slurp(cfg.out / "models/all/starting_high_attributions.csv");
  EXPECT_EQ(std::count(attributions.begin(), attributions.end(), '\n'), 1 + 40 * 15);

  auto manifest = nlohmann::json::parse(slurp(cfg.out / "manifest.json"));
  ASSERT_FALSE(manifest["files"].empty());
  for (const auto& f : manifest["files"]) {
    auto p = cfg.out / f["path"].get<std::string>();
    EXPECT_TRUE(fs::exists(p)) << p;
    EXPECT_GT(fs::file_size(p), 0u) << p;
  }
  // 20-hero communities are below 2 * folds per case
  EXPECT_FALSE(manifest["warnings"].empty());
}

TEST(Pipeline, StagesStopEarly) {
  auto cfg = load_config(synth_config("pipe_stage", 30));
  auto r = run_pipeline(cfg, Stage::communities, true);
  EXPECT_TRUE(r.partition.has_value());
  EXPECT_TRUE(r.scopes.empty());
  EXPECT_TRUE(fs::exists(cfg.out / "communities/partition.csv"));
  EXPECT_FALSE(fs::exists(cfg.out / "behavior/dr_series.csv"));
}

TEST(Pipeline, EmptyKeyUserSetHaltsCleanly) {
  auto path = synth_config("pipe_nokeys", 12, "min_span_days = 2000\n");
  try {
    run_pipeline(load_config(path), Stage::explain, true);
    FAIL() << "expected a halt";
  } catch (const Error& e) {
    EXPECT_EQ(e.stage(), "behavior");
    EXPECT_NE(std::string(e.what()).find("activity criteria"), std::string::npos);
  }
}

TEST(Pipeline, TooFewKeyUsersForKRange) {
  auto path = synth_config("pipe_few", 4);
  try {
    run_pipeline(load_config(path), Stage::cluster, true);
    FAIL() << "expected a halt";
  } catch (const Error& e) {
    EXPECT_EQ(e.stage(), "cluster");
  }
}

TEST(Pipeline, KeyUserWithoutUsableSeriesIsDropped) {
  auto path = synth_config("pipe_sparse", 12);
  const auto dir = path.parent_path();
  {
    std::ofstream tx(dir / "transactions.csv", std::ios::app);
    // one transaction at the start, then weekly listings only after the DR horizon
    tx << "x0,lonely,r0000000,2018-01-01T00:00:00Z,2018-01-01T06:00:00Z\n";
    int w = 0;
    for (const char* d : {"2019-02-01", "2019-02-08", "2019-02-15", "2019-02-22", "2019-03-01", "2019-03-08"}) {
      ++w;
      tx << fmt::format("x{},lonely,r0000001,{}T00:00:00Z,{}T06:00:00Z\n", w, d, d);
    }
  }
  {
    std::ofstream heroes(dir / "heroes.txt", std::ios::app);
    heroes << "lonely\n";
  }
  auto cfg = load_config(path);
  auto r = run_pipeline(cfg, Stage::behavior, true);
  EXPECT_NE(std::find(r.key_users.ids.begin(), r.key_users.ids.end(), "lonely"), r.key_users.ids.end());
  for (const auto& s : r.scopes[0].series) EXPECT_NE(s.user, "lonely");
  EXPECT_EQ(r.scopes[0].series.size(), 12u);
}

TEST(Pipeline, HubRuleKeyUsers) {
  auto path = synth_config("pipe_hubs", 16, "key_users = hub\nhub_multiplier = 3\n");
  auto r = run_pipeline(load_config(path), Stage::behavior, true);
  EXPECT_EQ(r.key_users.origin, KeyUserOrigin::hub_rule);
  for (const auto& u : r.key_users.ids) EXPECT_EQ(u[0], 'h');
}

}  // namespace
