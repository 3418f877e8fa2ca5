#include <gtest/gtest.h>

#include <random>

#include "hnu/metrics.hpp"
#include "hnu/problems.hpp"
#include "hnu/search.hpp"

using namespace hnu;

namespace {

TraceEvent ev(EventKind kind, std::uint64_t seq, double t = 0, bool correct = true) {
  TraceEvent e;
  e.student = "s";
  e.problem = "p";
  e.seq = seq;
  e.kind = kind;
  e.action_time = t;
  if (kind == EventKind::kDerive) {
    e.correct = correct;
    e.rule = RuleId::kModusPonens;
  }
  return e;
}

TraceEvent justify(std::uint64_t seq, std::uint64_t hint_seq) {
  TraceEvent e = ev(EventKind::kHintJustified, seq);
  e.hint_seq = hint_seq;
  return e;
}

}  // namespace

TEST(Performance, TimeIsCappedPerAction) {
  std::vector<TraceEvent> a{ev(EventKind::kDerive, 1, 120), ev(EventKind::kDerive, 2, 420)};
  EXPECT_DOUBLE_EQ(capped_seconds(a), 420);
  EXPECT_DOUBLE_EQ(performance({a}).time_minutes, 7);
}

TEST(Performance, AccuracyAndLength) {
  std::vector<TraceEvent> a, b, c;
  std::uint64_t seq = 0;
  for (int i = 0; i < 3; ++i) a.push_back(ev(EventKind::kDerive, ++seq));
  a.push_back(ev(EventKind::kDerive, ++seq, 0, false));
  a.push_back(ev(EventKind::kProblemComplete, ++seq));
  for (int i = 0; i < 4; ++i) b.push_back(ev(EventKind::kDerive, ++seq));
  b.push_back(ev(EventKind::kDerive, ++seq, 0, false));
  b.push_back(ev(EventKind::kProblemComplete, ++seq));
  auto p = performance({a, b});
  EXPECT_EQ(p.length, 7u);
  EXPECT_EQ(p.completed, 2u);
  ASSERT_TRUE(p.accuracy());
  EXPECT_DOUBLE_EQ(*p.accuracy(), 7.0 / 9.0);

  // Six of eight applications correct; the unfinished attempt adds no length.
  std::vector<TraceEvent> d;
  for (int i = 0; i < 6; ++i) d.push_back(ev(EventKind::kDerive, ++seq));
  for (int i = 0; i < 2; ++i) d.push_back(ev(EventKind::kDerive, ++seq, 0, false));
  auto q = performance({d});
  EXPECT_DOUBLE_EQ(*q.accuracy(), 0.75);
  EXPECT_EQ(q.length, 0u);
  EXPECT_FALSE(performance({c}).accuracy());
}

TEST(HintCounts, JustifiedRatio) {
  std::vector<Hint> hints;
  for (int i = 0; i < 10; ++i) {
    Hint h;
    h.agency = i < 4 ? Agency::kProactive : Agency::kOnDemand;
    h.justified = i != 0;
    hints.push_back(h);
  }
  auto c = hint_counts(hints);
  EXPECT_DOUBLE_EQ(*hjr(hints), 0.9);
  EXPECT_EQ(c.proactive + c.on_demand, c.issued());
  EXPECT_EQ(c.proactive, 4u);
  EXPECT_DOUBLE_EQ(*c.proactive_hjr(), 0.75);
  EXPECT_DOUBLE_EQ(*c.on_demand_hjr(), 1.0);
  EXPECT_FALSE(hjr({}));
}

TEST(HintCounts, FromTrace) {
  std::vector<TraceEvent> t{ev(EventKind::kProactiveHint, 1), ev(EventKind::kDerive, 2), justify(3, 1),
                            ev(EventKind::kHintRequest, 4),   ev(EventKind::kHintRequest, 5), ev(EventKind::kDerive, 6),
                            justify(7, 5)};
  auto c = hint_counts(t);
  EXPECT_EQ(c.proactive, 1u);
  EXPECT_EQ(c.on_demand, 2u);
  EXPECT_EQ(c.proactive_justified, 1u);
  EXPECT_EQ(c.on_demand_justified, 1u);
  EXPECT_NEAR(*c.hjr(), 2.0 / 3.0, 1e-12);
}

namespace {

StepObservation obs(bool observed, bool predicted, bool requested, bool received) {
  return StepObservation{observed, predicted, requested, received};
}

}  // namespace

TEST(HelpBehaviors, Fixture) {
  std::vector<StepObservation> s;
  s.push_back(obs(true, false, false, false));  // avoidance
  s.push_back(obs(true, true, false, false));   // avoidance
  s.push_back(obs(false, false, true, true));   // abuse
  for (int i = 0; i < 7; ++i) s.push_back(obs(false, false, false, false));
  auto r = help_behaviors(s);
  EXPECT_EQ(r.steps, 10u);
  EXPECT_DOUBLE_EQ(r.avoidance(), 20);
  EXPECT_DOUBLE_EQ(r.abuse(), 10);
  EXPECT_DOUBLE_EQ(r.appropriateness(), 0);
}

TEST(HelpBehaviors, AllAppropriate) {
  std::vector<StepObservation> s{obs(true, true, false, true), obs(false, true, true, true)};
  auto r = help_behaviors(s);
  EXPECT_DOUBLE_EQ(r.appropriateness(), 100);
  EXPECT_DOUBLE_EQ(r.avoidance(), 0);
  EXPECT_DOUBLE_EQ(r.abuse(), 0);
}

TEST(HelpBehaviors, NeedsPredictions) {
  StepObservation o;
  EXPECT_THROW(help_behaviors({o}), MetricsError);
  EXPECT_EQ(help_behaviors({}).avoidance(), 0);
}

TEST(TargetedRules, PartitionDerivations) {
  std::vector<TraceEvent> t;
  std::mt19937_64 rng(2);
  const RuleId rules[] = {RuleId::kModusPonens, RuleId::kConjunction, RuleId::kSimplification, RuleId::kAddition};
  for (std::uint64_t i = 1; i <= 200; ++i) {
    TraceEvent e = ev(i % 7 == 0 ? EventKind::kHintRequest : EventKind::kDerive, i, 0, rng() % 3 != 0);
    if (e.kind == EventKind::kDerive) e.rule = rules[rng() % 4];
    t.push_back(e);
  }
  auto s = targeted_rule_stats(t, {RuleId::kModusPonens, RuleId::kAddition});
  std::size_t derives = 0, correct = 0, targeted = 0;
  for (const TraceEvent& e : t)
    if (e.kind == EventKind::kDerive) {
      ++derives;
      correct += *e.correct;
      targeted += *e.rule == RuleId::kModusPonens || *e.rule == RuleId::kAddition;
    }
  EXPECT_EQ(s.total(), derives);
  EXPECT_EQ(s.correct_targeted + s.correct_other, correct);
  EXPECT_EQ(s.correct_targeted + s.incorrect_targeted, targeted);
}

TEST(TargetedRules, ShortestProofRules) {
  const Problem& p = shipped_problems().front();
  auto rules = targeted_rules(p, p.optimal_length);
  auto proof = shortest_proof(p, p.optimal_length);
  ASSERT_TRUE(proof);
  for (const ProofStep& s : proof->steps) EXPECT_TRUE(rules.count(s.rule));
}

TEST(Ks, IdenticalAndDisjoint) {
  std::vector<double> a{1, 2, 3, 4, 5};
  auto same = ks_test(a, a);
  EXPECT_DOUBLE_EQ(same.d, 0);
  EXPECT_DOUBLE_EQ(same.p, 1);
  auto apart = ks_test({1, 2, 3}, {10, 11, 12, 13});
  EXPECT_DOUBLE_EQ(apart.d, 1);
  EXPECT_THROW(ks_test({}, a), MetricsError);
}

TEST(Ks, SymmetricAndMonotoneInvariant) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n0(0, 1), n1(0.4, 1);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a, b;
    for (int i = 0; i < 40; ++i) a.push_back(n0(rng));
    for (int i = 0; i < 55; ++i) b.push_back(n1(rng));
    auto ab = ks_test(a, b), ba = ks_test(b, a);
    EXPECT_DOUBLE_EQ(ab.d, ba.d);
    EXPECT_DOUBLE_EQ(ab.p, ba.p);
    std::vector<double> ea, eb;
    for (double x : a) ea.push_back(std::exp(x));
    for (double x : b) eb.push_back(std::exp(x));
    EXPECT_NEAR(ks_test(ea, eb).d, ab.d, 1e-12);
  }
}

TEST(Ks, StatisticMatchesBruteForce) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> v(0, 9);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> a, b;
    for (int i = 0; i < 12; ++i) a.push_back(v(rng));
    for (int i = 0; i < 17; ++i) b.push_back(v(rng));
    double d = 0;
    for (int x = -1; x <= 10; ++x) {
      double fa = 0, fb = 0;
      for (double y : a) fa += y <= x;
      for (double y : b) fb += y <= x;
      d = std::max(d, std::abs(fa / 12 - fb / 17));
    }
    EXPECT_NEAR(ks_test(a, b).d, d, 1e-12);
  }
}

TEST(Ks, ExactPermutationPValue) {
  // Of the 20 ways to split six values three and three, two separate them.
  auto r = ks_test({1, 2, 3}, {4, 5, 6}, true);
  EXPECT_DOUBLE_EQ(r.d, 1);
  EXPECT_DOUBLE_EQ(r.p, 0.1);
  EXPECT_DOUBLE_EQ(ks_test({1, 2, 3}, {1, 2, 3}, true).p, 1);
  std::vector<double> big(11, 1.0);
  EXPECT_THROW(ks_test(big, big, true), MetricsError);
}

TEST(Ks, AsymptoticTailValues) {
  EXPECT_NEAR(detail::kolmogorov_q(1.3581), 0.05, 1e-3);
  EXPECT_NEAR(detail::kolmogorov_q(1.6276), 0.01, 1e-3);
  EXPECT_DOUBLE_EQ(detail::kolmogorov_q(0), 1);
}
