#include <gtest/gtest.h>

#include <random>

#include "hnu/forest.hpp"
#include "hnu/predictor.hpp"
#include "hnu/problems.hpp"
#include "hnu/stepscore.hpp"
#include "oracles.hpp"

using namespace hnu;

TEST(PenalizeGain, WorkedExampleWithHint) {
  auto g = penalize_gain(81, 87, 74, true);
  EXPECT_DOUBLE_EQ(g.post_quality, 84);
  EXPECT_DOUBLE_EQ(g.absolute_progress, 10);
  EXPECT_DOUBLE_EQ(g.relative_progress, 3);
}

TEST(PenalizeGain, WorkedExampleWithoutHint) {
  auto g = penalize_gain(81, 87, 74, false);
  EXPECT_DOUBLE_EQ(g.post_quality, 87);
  EXPECT_DOUBLE_EQ(g.absolute_progress, 13);
  EXPECT_DOUBLE_EQ(g.relative_progress, 6);
}

TEST(PenalizeGain, ZeroGainUnchanged) {
  auto g = penalize_gain(60, 60, 50, true);
  EXPECT_DOUBLE_EQ(g.post_quality, 60);
  EXPECT_DOUBLE_EQ(g.relative_progress, 0);
}

TEST(PenalizeGain, HalvesGainAndLossAlike) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> q(0, 100);
  for (int i = 0; i < 1000; ++i) {
    const double pre = q(rng), post = q(rng), start = q(rng);
    auto on = penalize_gain(pre, post, start, true);
    auto off = penalize_gain(pre, post, start, false);
    EXPECT_NEAR(on.relative_progress * 2, off.relative_progress, 1e-9);
    if (post > pre) {
      EXPECT_LT(on.post_quality, off.post_quality);
    }
    if (post < pre) {
      EXPECT_GT(on.post_quality, off.post_quality);
    }
  }
}

TEST(Progress, PenaltySwitchOff) {
  auto p = progress(Quality{81, 50}, Quality{87, 70}, Quality{74, 40}, true, false);
  EXPECT_DOUBLE_EQ(p.post_global, 87);
  EXPECT_DOUBLE_EQ(p.post_local, 70);
  auto h = progress(Quality{81, 50}, Quality{87, 70}, Quality{74, 40}, true, true);
  EXPECT_DOUBLE_EQ(h.post_local, 60);
  EXPECT_DOUBLE_EQ(h.absolute_local, 20);
}

TEST(Efficiency, SignOfAbsoluteGlobalProgress) {
  ProgressVector p;
  p.absolute_global = 10;
  EXPECT_TRUE(efficient(p));
  p.absolute_global = 0;
  EXPECT_TRUE(efficient(p));
  p.absolute_global = -2;
  EXPECT_FALSE(efficient(p));
  p.relative_local = 5;
  EXPECT_TRUE(efficient(p, {ProgressKind::kRelative, QualityKind::kLocal}));
}

TEST(DurationThreshold, NearestRank) {
  EXPECT_DOUBLE_EQ(duration_threshold({10, 20, 30, 40}), 30);
  EXPECT_DOUBLE_EQ(duration_threshold({100, 5, 20, 15, 10}), 20);
  EXPECT_DOUBLE_EQ(duration_threshold({7}), 7);
  EXPECT_THROW(duration_threshold({}), std::invalid_argument);
}

TEST(DurationThreshold, PerProblem) {
  StepRecord a, b, c;
  a.problem = b.problem = "x";
  c.problem = "y";
  a.duration = 4;
  b.duration = 9;
  c.duration = 2;
  auto t = duration_thresholds({{a, c}, {b}});
  EXPECT_DOUBLE_EQ(t.at("x"), 9);
  EXPECT_DOUBLE_EQ(t.at("y"), 2);
}

TEST(LabelSteps, WorkedSequence) {
  std::vector<StepFlags> f{{false, true}, {false, false}, {false, false}, {true, false}, {true, true}};
  std::vector<StepBehavior> want{StepBehavior::kExpert, StepBehavior::kFarOff, StepBehavior::kFarOff,
                                 StepBehavior::kFutile, StepBehavior::kStrategic};
  EXPECT_EQ(label_steps(f), want);
}

TEST(LabelSteps, AllQuickEfficientIsExpert) {
  std::vector<StepFlags> f(6, StepFlags{false, true});
  for (StepBehavior b : label_steps(f)) EXPECT_EQ(b, StepBehavior::kExpert);
}

TEST(LabelSteps, LoneQuickInefficientIsOpportunistic) {
  std::vector<StepFlags> f{{false, true}, {false, false}, {true, false}, {false, false}};
  auto l = label_steps(f);
  EXPECT_EQ(l[1], StepBehavior::kOpportunistic);
  EXPECT_EQ(l[3], StepBehavior::kOpportunistic);
  EXPECT_FALSE(is_helpneed(l[1]));
  EXPECT_TRUE(is_helpneed(l[2]));
}

TEST(LabelSteps, MatchesOracleOnRandomSequences) {
  std::mt19937_64 rng(11);
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<int> len(0, 12);
  for (int t = 0; t < 10000; ++t) {
    const int n = len(rng);
    std::vector<StepFlags> f;
    std::vector<std::pair<bool, bool>> g;
    for (int i = 0; i < n; ++i) {
      bool l = coin(rng), e = coin(rng);
      f.push_back({l, e});
      g.push_back({l, e});
    }
    auto got = label_steps(f);
    auto want = oracle::label(g);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_EQ(got[i], oracle::to_behavior(want[i])) << "trial " << t;
  }
}

namespace {

// S0 -> S1 -> G with a branch S0 -> D. Global qualities come out as
// S0 47.025, S1 94.5, G 100, D 0.
InteractionNetwork branch_network() {
  InteractionNetwork net("p", KeyMode::kUnordered);
  auto s0 = net.add_node("S0", false);
  auto s1 = net.add_node("S1", false);
  auto g = net.add_node("G", true);
  auto d = net.add_node("D", false);
  net.set_start("S0");
  net.add_transition(s0, s1, StepKind::kDerive, "a");
  net.add_transition(s0, d, StepKind::kDerive, "b");
  net.add_transition(s1, g, StepKind::kDerive, "c");
  ValueIterationParams vp;
  vp.epsilon = 1e-12;
  net.value_iterate(vp);
  return net;
}

StepRecord step(const std::string& pre, const std::string& post, double duration, bool hint) {
  StepRecord s;
  s.problem = "p";
  s.pre_unordered = s.pre_ordered = pre;
  s.post_unordered = s.post_ordered = post;
  s.duration = duration;
  s.hint_used = hint;
  s.hints_requested = hint ? 1 : 0;
  return s;
}

}  // namespace

TEST(FeatureTracker, ColdStart) {
  const Problem& p = shipped_problems().front();
  FeatureTracker t(p, nullptr, 10, true, {});
  auto f = t.features("anything");
  EXPECT_FALSE(f.state_based);
  ASSERT_EQ(f.state_free.size(), state_free_feature_names().size());
  for (std::size_t i = 0; i + 1 < f.state_free.size(); ++i) EXPECT_EQ(f.state_free[i], 0) << i;
  EXPECT_EQ(f.state_free.back(), p.optimal_length);
}

TEST(FeatureTracker, StateBlockAtStartHoldsCurrentQuality) {
  auto net = branch_network();
  FeatureTracker t(shipped_problems().front(), &net, 10, true, {});
  auto f = t.features("S0");
  ASSERT_TRUE(f.state_based);
  EXPECT_NEAR((*f.state_based)[5], 47.025, 1e-9);
  EXPECT_EQ((*f.state_based)[3], 0);
}

TEST(FeatureTracker, HintedStepIsHalved) {
  auto net = branch_network();
  FeatureTracker t(shipped_problems().front(), &net, 10, true, {});
  t.observe(step("S0", "S1", 4, true));
  auto f = t.features("S1");
  ASSERT_TRUE(f.state_based);
  const double post = 47.025 + (94.5 - 47.025) / 2;
  EXPECT_NEAR((*f.state_based)[5], post, 1e-9);
  EXPECT_NEAR((*f.state_based)[3], post - 47.025, 1e-9);
  EXPECT_EQ(f.state_free[0], 4);
  EXPECT_EQ(f.state_free[1], 1);
  EXPECT_EQ(f.state_free[8], 1);
  EXPECT_EQ(f.state_free[9], 1);

  FeatureTracker u(shipped_problems().front(), &net, 10, false, {});
  u.observe(step("S0", "S1", 4, true));
  EXPECT_NEAR((*u.features("S1").state_based)[5], 94.5, 1e-9);
}

TEST(FeatureTracker, OnlineLabelsAndUnmatchedStates) {
  auto net = branch_network();
  FeatureTracker t(shipped_problems().front(), &net, 10, true, {});
  t.observe(step("S0", "D", 2, false));
  t.observe(step("D", "D", 2, false));
  t.observe(step("S0", "nowhere", 30, false));
  auto f = t.features("nowhere");
  EXPECT_FALSE(f.state_based);
  EXPECT_EQ(f.state_free[5], 1);  // opportunistic
  EXPECT_EQ(f.state_free[6], 1);  // far off
  EXPECT_DOUBLE_EQ(t.helpneed_rate(), 0.5);
}

TEST(StudentHistory, Means) {
  StudentHistory h;
  h.add_problem(0.5, 1.0, 0.8);
  h.add_problem(0.1, std::nullopt, 0.6);
  EXPECT_DOUBLE_EQ(h.helpneed_rate(), 0.3);
  EXPECT_DOUBLE_EQ(h.hjr(), 1.0);
  EXPECT_DOUBLE_EQ(h.accuracy(), 0.7);
}

namespace {

void blobs(std::mt19937_64& rng, std::size_t n, std::vector<std::vector<double>>& x, std::vector<int>& y) {
  std::normal_distribution<double> noise(0, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 2);
    const double m = c ? 1.5 : -1.5;
    x.push_back({m + noise(rng), m + noise(rng), noise(rng)});
    y.push_back(c);
  }
}

}  // namespace

TEST(Forest, SeparatesTwoBlobs) {
  int good = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::vector<double>> xtr, xte;
    std::vector<int> ytr, yte;
    blobs(rng, 500, xtr, ytr);
    blobs(rng, 500, xte, yte);
    ForestParams fp;
    fp.n_trees = 50;
    fp.seed = seed;
    auto rf = RandomForest::fit(xtr, ytr, fp);
    std::vector<double> s;
    for (const auto& r : xte) s.push_back(rf.score(r));
    if (confusion(s, yte, 0.5).recall() >= 0.9 && auc(s, yte) >= 0.95) ++good;
  }
  EXPECT_GE(good, 9);
}

TEST(Forest, RejectsBadInput) {
  EXPECT_THROW(RandomForest::fit({{1.0}, {2.0}}, {1, 1}), std::invalid_argument);
  EXPECT_THROW(RandomForest::fit({}, {}), std::invalid_argument);
  EXPECT_THROW(RandomForest::fit({{1.0}, {2.0, 3.0}}, {0, 1}), std::invalid_argument);
  auto rf = RandomForest::fit({{1.0}, {2.0}}, {0, 1});
  EXPECT_THROW(rf.score({1.0, 2.0}), std::invalid_argument);
}

TEST(Forest, ClassWeightEqualsDuplication) {
  std::vector<std::vector<double>> x{{1}, {2}, {3}, {4}, {5}, {6}};
  std::vector<int> y{0, 0, 1, 0, 1, 1};
  ForestParams fp;
  fp.n_trees = 1;
  fp.max_depth = 1;
  fp.bootstrap = false;
  fp.max_features = 1;
  fp.class1_weight = 2;
  auto weighted = RandomForest::fit(x, y, fp);
  std::vector<std::vector<double>> xd = x;
  std::vector<int> yd = y;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (y[i]) {
      xd.push_back(x[i]);
      yd.push_back(1);
    }
  fp.class1_weight = 1;
  auto dup = RandomForest::fit(xd, yd, fp);
  const auto& a = weighted.trees().at(0).nodes();
  const auto& b = dup.trees().at(0).nodes();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].feature, b[i].feature);
    EXPECT_DOUBLE_EQ(a[i].threshold, b[i].threshold);
    EXPECT_NEAR(a[i].p1, b[i].p1, 1e-12);
  }
}

TEST(Forest, DeterministicAndRoundTrips) {
  std::mt19937_64 rng(5);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  blobs(rng, 200, x, y);
  ForestParams fp;
  fp.n_trees = 20;
  fp.seed = 9;
  auto a = RandomForest::fit(x, y, fp);
  auto b = RandomForest::fit(x, y, fp);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  auto c = RandomForest::from_json(nlohmann::json::parse(a.to_json().dump()));
  for (const auto& r : x) EXPECT_DOUBLE_EQ(a.score(r), c.score(r));
}

namespace {

std::vector<Example> toy_examples(std::size_t students, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0, 1);
  std::vector<Example> out;
  for (std::size_t s = 0; s < students; ++s)
    for (int k = 0; k < 20; ++k) {
      Example e;
      e.student = "st" + std::to_string(s);
      e.label = k % 3 == 0;
      e.x.state_free.assign(state_free_feature_names().size(), 0);
      for (double& v : e.x.state_free) v = noise(rng);
      e.x.state_free[0] += e.label ? 2 : 0;
      if (k % 2) {
        std::array<double, 6> a{};
        for (double& v : a) v = noise(rng);
        a[3] += e.label ? -3 : 0;
        e.x.state_based = a;
      }
      out.push_back(e);
    }
  return out;
}

}  // namespace

TEST(Model, DispatchesOnStateBlock) {
  auto data = toy_examples(10, 1);
  ModelConfig mc;
  mc.forest.n_trees = 20;
  auto m = HelpNeedModel::train(data, mc);
  for (const Example& e : data) {
    auto p = m.predict(e.x);
    EXPECT_EQ(p.classifier, e.x.state_based ? Classifier::kStateBased : Classifier::kStateFree);
    EXPECT_EQ(p.helpneed, p.score >= mc.threshold);
  }
  FeatureVector bad;
  bad.state_free = {1, 2};
  EXPECT_THROW(m.predict(bad), ModelError);
}

TEST(Model, SingleClassRejectedAndUnanimousScoreIsOne) {
  auto data = toy_examples(4, 2);
  for (Example& e : data) e.label = 0;
  EXPECT_THROW(HelpNeedModel::train(data, {}), ModelError);

  // Matched examples all positive: the state-based side predicts 1 always.
  data = toy_examples(4, 2);
  for (Example& e : data)
    if (e.x.state_based) e.label = 1;
  ModelConfig mc;
  mc.forest.n_trees = 10;
  auto m = HelpNeedModel::train(data, mc);
  for (const Example& e : data)
    if (e.x.state_based) {
      EXPECT_EQ(m.predict(e.x).score, 1.0);
    }
}

TEST(Model, JsonRoundTrip) {
  auto data = toy_examples(6, 3);
  ModelConfig mc;
  mc.forest.n_trees = 10;
  auto m = HelpNeedModel::train(data, mc, {{"p", 12.5}});
  auto back = HelpNeedModel::from_json(nlohmann::json::parse(m.to_json().dump()));
  EXPECT_EQ(back.to_json().dump(), m.to_json().dump());
  EXPECT_DOUBLE_EQ(back.t75("p"), 12.5);
  for (const Example& e : data) EXPECT_DOUBLE_EQ(back.predict(e.x).score, m.predict(e.x).score);
  auto j = m.to_json();
  j["feature_schema"]["version"] = 99;
  EXPECT_THROW(HelpNeedModel::from_json(j), ModelError);
}

TEST(Auc, Examples) {
  EXPECT_DOUBLE_EQ(auc({0.9, 0.8, 0.4, 0.3}, {1, 1, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(auc({0.9, 0.8, 0.4, 0.3}, {0, 0, 1, 1}), 0.0);
  EXPECT_DOUBLE_EQ(auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}), 0.5);
  EXPECT_TRUE(std::isnan(auc({0.1, 0.2}, {1, 1})));
}

TEST(Auc, MatchesPairCounting) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> level(0, 5);
  std::bernoulli_distribution coin(0.4);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> s;
    std::vector<int> y;
    for (int i = 0; i < 30; ++i) {
      s.push_back(level(rng) / 5.0);
      y.push_back(coin(rng));
    }
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = 0; j < s.size(); ++j)
        if (y[i] && !y[j]) {
          pairs += 1;
          wins += s[i] > s[j] ? 1 : s[i] == s[j] ? 0.5 : 0;
        }
    if (pairs == 0) continue;
    EXPECT_NEAR(auc(s, y), wins / pairs, 1e-12);
  }
}

TEST(Evaluation, FoldsSplitByStudent) {
  auto data = toy_examples(12, 4);
  auto folds = student_folds(data, 3, 7);
  EXPECT_EQ(folds.size(), 12u);
  std::array<int, 3> sizes{};
  for (const auto& [s, f] : folds) sizes.at(f) += 1;
  for (int n : sizes) EXPECT_EQ(n, 4);
  auto [train, test] = split_by_student(data, 0.25, 7);
  std::set<std::string> a, b;
  for (const Example& e : train) a.insert(e.student);
  for (const Example& e : test) b.insert(e.student);
  for (const auto& s : b) EXPECT_FALSE(a.count(s));
  EXPECT_EQ(b.size(), 3u);
}

TEST(Evaluation, CrossValidationRows) {
  auto data = toy_examples(12, 5);
  ModelConfig mc;
  mc.forest.n_trees = 10;
  auto rep = cross_validate(data, mc, {}, 3, 1);
  EXPECT_TRUE(rep.skipped.empty());
  ASSERT_EQ(rep.rows.size(), 12u);
  EXPECT_EQ(rep.rows.back().name, "mean");
  for (const EvalRow& r : rep.rows)
    if (r.name != "mean" && r.classifier == "all") {
      EXPECT_EQ(r.n, 80u);
      EXPECT_GT(r.auc, 0.7);
    }
}

TEST(Evaluation, LowerThresholdNeverLowersRecall) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> s;
  std::vector<int> y;
  for (int i = 0; i < 200; ++i) {
    s.push_back(u(rng));
    y.push_back(u(rng) < s.back() ? 1 : 0);
  }
  double prev = -1;
  for (double th = 1.0; th >= 0; th -= 0.05) {
    const double r = confusion(s, y, th).recall();
    EXPECT_GE(r, prev);
    prev = r;
  }
}
