#include <gtest/gtest.h>

#include <random>

#include "volnet/models.hpp"

using namespace volnet;

namespace {

struct Data {
  FeatureMatrix X;
  LabelVector y;
};

Data separable(std::size_t n, std::uint64_t seed, std::size_t d = 4) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Data out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(d);
    for (auto& v : x) v = u(rng);
    const int label = x[0] + 0.5 * x[1] > 0 ? 1 : 0;
    x[0] += label ? 0.2 : -0.2;
    out.X.push_back(x);
    out.y.push_back(label);
  }
  return out;
}

Data noise_labels(std::size_t n, std::uint64_t seed, double prior) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> u(0, 1);
  std::bernoulli_distribution b(prior);
  Data out;
  for (std::size_t i = 0; i < n; ++i) {
    out.X.push_back({u(rng), u(rng), u(rng)});
    out.y.push_back(b(rng) ? 1 : 0);
  }
  return out;
}

double train_accuracy(const TrainedClassifier& m, const Data& d) {
  LabelVector pred;
  for (const auto& x : d.X) pred.push_back(predict(m, x).label);
  return metrics(d.y, pred).accuracy;
}

TEST(Metrics, Examples) {
  auto m = metrics({1, 1, 0, 0}, {1, 0, 0, 0});
  EXPECT_DOUBLE_EQ(m.accuracy, 0.75);
  EXPECT_NEAR(m.f1, 2.0 / 3.0, 1e-12);
  auto perfect = metrics({1, 0, 1}, {1, 0, 1});
  EXPECT_EQ(perfect.accuracy, 1.0);
  EXPECT_EQ(perfect.f1, 1.0);
  EXPECT_EQ(metrics({1, 0, 1}, {0, 0, 0}).f1, 0.0);
  EXPECT_THROW(metrics({}, {}), Error);
}

TEST(DecisionTree, AxisSeparableFitsExactly) {
  Data d;
  for (int i = 0; i < 20; ++i) {
    d.X.push_back({static_cast<double>(i), static_cast<double>(i % 3)});
    d.y.push_back(i >= 8 ? 1 : 0);
  }
  auto m = train(Algorithm::decision_tree, d.X, d.y);
  EXPECT_EQ(train_accuracy(m, d), 1.0);
  for (const auto& x : d.X) {
    const double s = score(m, x);
    EXPECT_TRUE(s == 0.0 || s == 1.0);
  }
}

// Every single axis split of XOR leaves Gini unchanged, so the root split has zero gain.
TEST(DecisionTree, XorNeedsZeroGainRootSplit) {
  Data d{{{0, 0}, {0, 1}, {1, 0}, {1, 1}}, {0, 1, 1, 0}};
  auto gini = [](double pos, double n) { return n == 0 ? 0 : 2 * (pos / n) * (1 - pos / n); };
  const double parent = 4 * gini(2, 4);
  for (int f = 0; f < 2; ++f) {
    double lpos = 0, ln = 0, rpos = 0, rn = 0;
    for (int i = 0; i < 4; ++i) (d.X[i][f] <= 0.5 ? (lpos += d.y[i], ln += 1) : (rpos += d.y[i], rn += 1));
    EXPECT_DOUBLE_EQ(ln * gini(lpos, ln) + rn * gini(rpos, rn), parent);
  }
  auto m = train(Algorithm::decision_tree, d.X, d.y, {{"max_depth", 2}, {"min_samples_leaf", 1}});
  EXPECT_EQ(train_accuracy(m, d), 1.0);
  auto shallow = train(Algorithm::decision_tree, d.X, d.y, {{"max_depth", 1}, {"min_samples_leaf", 1}});
  EXPECT_LT(train_accuracy(shallow, d), 1.0);
}

TEST(Train, SingleClassGivesConstantPredictor) {
  auto d = separable(30, 1);
  LabelVector ones(d.y.size(), 1);
  for (auto alg : kAllAlgorithms) {
    auto m = train(alg, d.X, ones);
    EXPECT_FALSE(m.warnings.empty());
    for (const auto& x : d.X) EXPECT_EQ(predict(m, x).label, 1);
  }
}

TEST(Train, InputErrors) {
  auto d = separable(10, 2);
  EXPECT_THROW(train(Algorithm::gbdt, {}, {}), Error);
  EXPECT_THROW(train(Algorithm::gbdt, d.X, LabelVector(3, 0)), Error);
  EXPECT_THROW(train(Algorithm::gbdt, d.X, d.y, {{"depth", 2}}), Error);
  LabelVector bad = d.y;
  bad[0] = 2;
  EXPECT_THROW(train(Algorithm::gbdt, d.X, bad), Error);
  auto m = train(Algorithm::logistic_regression, d.X, d.y);
  EXPECT_THROW(score(m, std::vector<double>{1.0}), Error);
}

TEST(NaiveBayes, SymmetricClassesScoreHalfAtMidpoint) {
  Data d{{{-2, 1}, {-1, -1}, {-3, 0}, {2, 1}, {1, -1}, {3, 0}}, {0, 0, 0, 1, 1, 1}};
  auto m = train(Algorithm::naive_bayes, d.X, d.y);
  EXPECT_NEAR(score(m, std::vector<double>{0, 0}), 0.5, 1e-12);
  EXPECT_GT(score(m, std::vector<double>{2, 0}), 0.9);
}

TEST(RandomForest, IdenticalTreesMatchSingleTree) {
  auto d = separable(60, 3);
  auto tree = train(Algorithm::decision_tree, d.X, d.y, {{"max_depth", 4}, {"min_samples_leaf", 2}});
  auto forest = train(Algorithm::random_forest, d.X, d.y,
                      {{"n_trees", 7}, {"max_depth", 4}, {"min_samples_leaf", 2}, {"max_features", 4}, {"bootstrap", 0}});
  for (const auto& x : d.X) EXPECT_DOUBLE_EQ(score(forest, x), score(tree, x));
}

TEST(Gbdt, TrainingLossNonIncreasing) {
  auto d = noise_labels(150, 4, 0.4);
  auto m = train(Algorithm::gbdt, d.X, d.y, {{"rounds", 60}});
  const auto& loss = std::get<BoostParams>(m.params).train_loss;
  ASSERT_EQ(loss.size(), 60u);
  for (std::size_t i = 1; i < loss.size(); ++i) EXPECT_LE(loss[i], loss[i - 1] + 1e-12);
  EXPECT_LT(loss.back(), loss.front());
}

TEST(StratifiedFolds, PartitionWithBalancedClasses) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto d = noise_labels(97 + seed, seed, 0.3);
    const std::size_t k = 10;
    auto fold = stratified_folds(d.y, k, seed);
    ASSERT_EQ(fold.size(), d.y.size());
    std::vector<std::size_t> pos(k, 0), neg(k, 0);
    for (std::size_t i = 0; i < fold.size(); ++i) {
      ASSERT_LT(fold[i], k);
      (d.y[i] ? pos : neg)[fold[i]]++;
    }
    EXPECT_LE(*std::max_element(pos.begin(), pos.end()) - *std::min_element(pos.begin(), pos.end()), 1u);
    EXPECT_LE(*std::max_element(neg.begin(), neg.end()) - *std::min_element(neg.begin(), neg.end()), 1u);
  }
  EXPECT_THROW(stratified_folds({0, 1}, 1, 0), Error);
  EXPECT_THROW(stratified_folds({0, 1}, 3, 0), Error);
}

TEST(KFold, SeparableDataGbdt) {
  auto d = separable(200, 5);
  CvOptions opt;
  opt.seed = 1;
  auto r = kfold_cv(Algorithm::gbdt, d.X, d.y, opt);
  EXPECT_GE(r.mean_accuracy, 0.95);
  EXPECT_EQ(r.tp + r.fp + r.tn + r.fn, d.y.size());
}

TEST(KFold, IndependentLabelsStayNearPrior) {
  auto d = noise_labels(400, 6, 0.7);
  for (auto alg : {Algorithm::logistic_regression, Algorithm::naive_bayes, Algorithm::gbdt}) {
    CvOptions opt;
    opt.seed = 2;
    auto r = kfold_cv(alg, d.X, d.y, opt);
    const double prior = std::count(d.y.begin(), d.y.end(), 1) / 400.0;
    EXPECT_NEAR(r.mean_accuracy, std::max(prior, 1 - prior), 0.1) << to_string(alg);
  }
}

TEST(KFold, LeaveOneOut) {
  auto d = separable(12, 7);
  CvOptions opt;
  opt.folds = 12;
  auto r = kfold_cv(Algorithm::naive_bayes, d.X, d.y, opt);
  std::vector<std::size_t> seen(12, 0);
  for (auto f : r.fold_of) seen[f]++;
  for (auto c : seen) EXPECT_EQ(c, 1u);
  for (double a : r.fold_accuracy) EXPECT_TRUE(a == 0.0 || a == 1.0);
}

TEST(KFold, DeterministicAndFlagsDegenerateFolds) {
  auto d = separable(80, 8);
  CvOptions opt;
  opt.seed = 3;
  for (auto alg : kAllAlgorithms) {
    auto a = kfold_cv(alg, d.X, d.y, opt), b = kfold_cv(alg, d.X, d.y, opt);
    EXPECT_EQ(a.fold_accuracy, b.fold_accuracy) << to_string(alg);
    EXPECT_EQ(eval_report_csv_row(a, "x"), eval_report_csv_row(b, "x"));
  }
  LabelVector few(20, 0);
  few[0] = 1;
  FeatureMatrix X(d.X.begin(), d.X.begin() + 20);
  opt.folds = 5;
  auto r = kfold_cv(Algorithm::gbdt, X, few, opt);
  EXPECT_EQ(std::count(r.fold_degenerate.begin(), r.fold_degenerate.end(), true), 1);
}

TEST(Persistence, JsonRoundTripPreservesScores) {
  auto d = separable(60, 9);
  for (auto alg : kAllAlgorithms) {
    auto m = train(alg, d.X, d.y, {}, 4, {"a", "b", "c", "d"});
    auto back = classifier_from_json(nlohmann::json::parse(to_json(m).dump()));
    EXPECT_EQ(back.algorithm, alg);
    EXPECT_EQ(back.feature_names, m.feature_names);
    for (const auto& x : d.X) EXPECT_EQ(score(back, x), score(m, x)) << to_string(alg);
  }
  auto constant = train(Algorithm::gbdt, d.X, LabelVector(d.X.size(), 0));
  EXPECT_EQ(score(classifier_from_json(to_json(constant)), d.X[0]), 0.0);
  EXPECT_THROW(classifier_from_json(nlohmann::json{{"format", "other"}}), Error);
  EXPECT_THROW(classifier_from_json(nlohmann::json::object()), Error);
}

TEST(Scores, AlwaysProbabilities) {
  auto d = noise_labels(100, 10, 0.5);
  for (auto alg : kAllAlgorithms) {
    auto m = train(alg, d.X, d.y, {}, 1);
    for (const auto& x : d.X) {
      const double s = score(m, x);
      EXPECT_GE(s, 0.0);
      EXPECT_LE(s, 1.0);
    }
  }
}

}  // namespace
