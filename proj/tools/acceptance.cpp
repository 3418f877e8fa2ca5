// Acceptance run: one PASS/FAIL line per criterion. Exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "../tests/oracles.hpp"
#include "hnu/experiments.hpp"
#include "hnu/metrics.hpp"

using namespace hnu;

namespace {

constexpr int kSeeds = 10;
constexpr int kSeedsNeeded = 9;
constexpr double kValueTolerance = 1e-9;
constexpr double kValueSeconds = 5;
constexpr double kSoundnessSeconds = 10;
constexpr double kExperimentSeconds = 120;
constexpr double kKsAlpha = 0.05;
constexpr std::size_t kHintSlack = 2;

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ValueIterationParams tight() {
  ValueIterationParams vp;
  vp.epsilon = 1e-12;
  return vp;
}

InteractionNetwork keyed_network(const std::vector<std::pair<std::string, std::string>>& edges,
                                  const std::set<std::string>& goals) {
  InteractionNetwork net("fixture", KeyMode::kUnordered);
  for (const auto& [a, b] : edges) {
    auto i = net.add_node(a, goals.count(a) > 0);
    auto j = net.add_node(b, goals.count(b) > 0);
    net.add_transition(i, j, StepKind::kDerive, b);
  }
  net.set_start(edges.front().first);
  return net;
}

Outcome halving() {
  auto on = penalize_gain(81, 87, 74, true);
  auto off = penalize_gain(81, 87, 74, false);
  const bool pass = on.post_quality == 84 && on.absolute_progress == 10 && off.post_quality == 87 &&
                    off.absolute_progress == 13;
  return {pass, fmt("post %.6g abs %.6g, unpenalized abs %.6g", on.post_quality, on.absolute_progress,
                    off.absolute_progress)};
}

Outcome value_iteration() {
  const auto t0 = Clock::now();
  bool pass = true;
  auto chain = keyed_network({{"S0", "S1"}, {"S1", "G"}}, {"G"});
  chain.value_iterate(tight());
  pass = pass && std::abs(chain.lookup("S1")->value - 89) <= kValueTolerance &&
         std::abs(chain.lookup("S0")->value - 79.1) <= kValueTolerance;
  auto branch = keyed_network({{"S0", "S1"}, {"S0", "D"}, {"S1", "G"}}, {"G"});
  branch.value_iterate(tight());
  pass = pass && std::abs(branch.lookup("S0")->value + 5.95) <= kValueTolerance;

  std::mt19937_64 rng(2024);
  double worst = 0;
  for (int k = 0; k < 200; ++k) {
    auto net = oracle::random_network(rng, std::uniform_int_distribution<std::size_t>(2, 50)(rng));
    if (!net.value_iterate(tight()).converged) pass = false;
    auto exact = oracle::solve_values(net, tight());
    for (std::size_t i = 0; i < net.size(); ++i) worst = std::max(worst, std::abs(net.node(i).value - exact[i]));
  }
  const double secs = since(t0);
  pass = pass && worst <= kValueTolerance && secs < kValueSeconds;
  return {pass, fmt("chain S0 %.9g, branch S0 %.9g, worst random error %.2e, %.2fs", chain.lookup("S0")->value,
                    branch.lookup("S0")->value, worst, secs)};
}

Outcome rule_soundness() {
  const auto t0 = Clock::now();
  const auto pool = oracle::formula_pool();
  const auto pairs = oracle::implication_pairs();
  std::vector<Expr> addends;
  for (char c : {'p', 'q', 'r'}) addends.push_back(Expr::atom(c));
  std::size_t checked = 0, unsound = 0;
  for (const Rule& rule : kRules) {
    if (rule.arity == 1) {
      std::vector<Expr> inputs = pool;
      inputs.insert(inputs.end(), pairs.begin(), pairs.end());
      for (const Expr& a : inputs)
        for (const Expr& c : apply_rule(rule.id, {a}, addends)) {
          ++checked;
          unsound += oracle::entails({a}, c) ? 0 : 1;
        }
    } else {
      std::vector<Expr> small(pool.begin(), pool.begin() + 6 + 4 * 36);
      small.insert(small.end(), pairs.begin(), pairs.end());
      for (const Expr& a : small)
        for (const Expr& b : small)
          for (const Expr& c : apply_rule(rule.id, {a, b})) {
            ++checked;
            unsound += oracle::entails({a, b}, c) ? 0 : 1;
          }
    }
  }
  const double secs = since(t0);
  return {unsound == 0 && checked > 0 && secs < kSoundnessSeconds,
          fmt("%zu conclusions checked, %zu unsound, %.2fs", checked, unsound, secs)};
}

Outcome hint_availability() {
  const auto t0 = Clock::now();
  const auto& probs = shipped_problems();
  Workbench wb;
  PolicyConfig policy = parse_policy("random:0.2");
  AttemptSetup setup{&policy, nullptr, nullptr, nullptr, true};
  Cohort c = simulate_cohort("avail", 40, 1, ProfileDistribution{}, probs, setup, wb);
  const NetworkLibrary lib = NetworkLibrary::build(all_attempts(replay_students(c.events, probs)), probs, {});

  std::map<std::string, std::map<std::string, ProofState>> states;
  for (const auto& a : group_attempts(c.events)) {
    const Problem* p = find_problem(probs, a.problem);
    StepReplayer r(*p);
    states[p->id].emplace(canonical_state(r.state(), KeyMode::kUnordered), r.state());
    for (const TraceEvent& e : a.events) {
      r.feed(e);
      states[p->id].emplace(canonical_state(r.state(), KeyMode::kUnordered), r.state());
    }
  }
  std::size_t total = 0, missing = 0, slow = 0;
  for (const Problem& p : probs) {
    const InteractionNetwork* net = lib.get(p.id, KeyMode::kUnordered);
    for (const auto& [key, start] : states[p.id]) {
      if (start.is_goal(p)) continue;
      ++total;
      auto rest = shortest_proof_from(start, p, SearchOptions{.max_depth = p.optimal_length});
      const std::size_t budget = (rest ? rest->steps.size() : p.optimal_length) + kHintSlack;
      ProofState s = start;
      std::size_t steps = 0;
      try {
        while (!s.is_goal(p) && steps <= budget) {
          Hint h = next_step_hint(net, s, p, &wb.cache());
          auto app = find_justification(s, p, h.statement);
          if (!app) throw HintError("hint not justifiable");
          s.derive(app->rule, app->premises, app->derived);
          ++steps;
        }
        slow += s.is_goal(p) ? 0 : 1;
      } catch (const HintError&) {
        ++missing;
      }
    }
  }
  return {total > 0 && missing == 0 && slow == 0,
          fmt("%zu states, %zu without a hint, %zu over budget, %.1fs", total, missing, slow, since(t0))};
}

Outcome labeler() {
  std::mt19937_64 rng(11);
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<int> len(0, 12);
  std::size_t mismatches = 0;
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
    if (got.size() != want.size()) {
      ++mismatches;
      continue;
    }
    for (std::size_t i = 0; i < got.size(); ++i) mismatches += got[i] == oracle::to_behavior(want[i]) ? 0 : 1;
  }
  return {mismatches == 0, fmt("10000 sequences, %zu mismatches", mismatches)};
}

Outcome per_seed(int needed, const std::function<std::pair<bool, std::string>(std::uint64_t)>& one) {
  int wins = 0;
  std::string detail;
  for (int s = 1; s <= kSeeds; ++s) {
    auto [ok, what] = one(static_cast<std::uint64_t>(s));
    wins += ok ? 1 : 0;
    if (!detail.empty()) detail += "; ";
    detail += fmt("%d:%s%s", s, what.c_str(), ok ? "" : "(x)");
  }
  return {wins >= needed, fmt("%d/%d seeds", wins, kSeeds) + " [" + detail + "]"};
}

Outcome unordered_dispatch() {
  const auto& probs = shipped_problems();
  return per_seed(kSeeds, [&](std::uint64_t s) {
    Workbench wb;
    auto events = shuffled_order_corpus(18, s, probs, wb);
    auto [train, test] = split_students(replay_students(events, probs), 1.0 / 3, s);
    auto r = dispatch_rates(train, test, probs);
    return std::pair{r.unordered > r.ordered, fmt("%.1f>%.1f", r.unordered, r.ordered)};
  });
}

Outcome penalty_fn() {
  const auto& probs = shipped_problems();
  const auto train = problems_in(probs, Section::kTraining);
  return per_seed(kSeedsNeeded, [&](std::uint64_t s) {
    Workbench wb;
    ProfileDistribution d;
    d.hint_adoption = {0.5, 0.95};
    Cohort c = hint_corpus("penalty", 60, s, d, train, 0.3, wb);
    auto r = penalty_fn_rates(replay_students(c.events, probs), probs, s);
    return std::pair{r.on < r.off, fmt("%.2f<%.2f", r.on, r.off)};
  });
}

Outcome planted_auc() {
  return per_seed(kSeedsNeeded, [](std::uint64_t s) {
    auto ex = planted_signal_examples(40, 60, s);
    ModelConfig mc;
    mc.forest.seed = s;
    auto rep = cross_validate(ex, mc, {}, 3, s);
    double sb = NAN, sf = NAN;
    for (const auto& row : rep.rows)
      if (row.name == "mean") {
        if (row.classifier == "state_based") sb = row.auc;
        if (row.classifier == "state_free") sf = row.auc;
      }
    return std::pair{sb > sf, fmt("%.3f>%.3f", sb, sf)};
  });
}

Outcome ab_direction() {
  const auto& probs = shipped_problems();
  double slowest = 0;
  Outcome o = per_seed(kSeedsNeeded, [&](std::uint64_t s) {
    const auto t0 = Clock::now();
    ExperimentConfig c;
    c.seed = s;
    const CohortReport r = run_experiment(c, probs).report;
    const double secs = since(t0);
    slowest = std::max(slowest, secs);
    const auto& a = r.adaptive();
    const auto& k = r.control();
    const bool ok = a.helpneed < k.helpneed && a.avoidance < k.avoidance && a.appropriateness > k.appropriateness &&
                    secs < kExperimentSeconds;
    return std::pair{ok, fmt("hn %.1f<%.1f av %.1f<%.1f ap %.1f>%.1f %.0fs", a.helpneed, k.helpneed, a.avoidance,
                             k.avoidance, a.appropriateness, k.appropriateness, secs)};
  });
  o.detail += fmt(", slowest run %.1fs", slowest);
  return o;
}

Outcome ks_shift() {
  const auto& probs = shipped_problems();
  Workbench wb;
  ProfileDistribution d;
  d.hint_adoption = {0.8, 0.95};
  Cohort c = hint_corpus("ks", 40, 1, d, problems_in(probs, Section::kTraining), 0.5, wb);
  auto students = replay_students(c.events, probs);
  const NetworkLibrary lib = NetworkLibrary::build(all_attempts(students), probs, {});
  auto on = absolute_global_progress(students, lib, true);
  auto off = absolute_global_progress(students, lib, false);
  auto k = ks_test(on, off);
  return {k.p < kKsAlpha, fmt("n %zu, D %.3f, p %.3g", on.size(), k.d, k.p)};
}

TraceEvent event(EventKind kind, std::uint64_t seq, double t = 0, bool correct = true) {
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

Outcome metrics_and_determinism() {
  std::vector<std::string> failed;
  auto check = [&](bool ok, const char* what) {
    if (!ok) failed.emplace_back(what);
  };

  std::vector<TraceEvent> capped{event(EventKind::kDerive, 1, 120), event(EventKind::kDerive, 2, 420)};
  check(performance({capped}).time_minutes == 7, "time cap");

  std::vector<TraceEvent> a, b;
  std::uint64_t seq = 0;
  for (int i = 0; i < 3; ++i) a.push_back(event(EventKind::kDerive, ++seq));
  a.push_back(event(EventKind::kDerive, ++seq, 0, false));
  a.push_back(event(EventKind::kProblemComplete, ++seq));
  for (int i = 0; i < 4; ++i) b.push_back(event(EventKind::kDerive, ++seq));
  b.push_back(event(EventKind::kDerive, ++seq, 0, false));
  b.push_back(event(EventKind::kProblemComplete, ++seq));
  auto perf = performance({a, b});
  check(perf.accuracy() && *perf.accuracy() == 7.0 / 9.0 && perf.length == 7, "accuracy");

  std::vector<Hint> hints(10);
  for (int i = 0; i < 10; ++i) hints[static_cast<std::size_t>(i)].justified = i != 0;
  check(hjr(hints) && *hjr(hints) == 0.9, "hjr");

  std::vector<StepObservation> obs{{true, false, false, false}, {true, true, false, false}, {false, false, true, true},
                                   {true, true, false, true},   {false, true, true, true}};
  for (int i = 0; i < 5; ++i) obs.push_back({false, false, false, false});
  auto hb = help_behaviors(obs);
  check(hb.avoidance() == 20 && hb.abuse() == 10 && hb.appropriateness() == 20, "help behaviors");

  ExperimentConfig c;
  c.seed = 7;
  c.students = 8;
  c.seed_students = 8;
  c.hn_students = 8;
  c.forest.n_trees = 20;
  const auto& probs = shipped_problems();
  auto r1 = run_experiment(c, probs);
  auto r2 = run_experiment(c, probs);
  std::ostringstream t1, t2;
  write_traces(r1.events, t1);
  write_traces(r2.events, t2);
  check(r1.report.to_json().dump() == r2.report.to_json().dump(), "report determinism");
  check(t1.str() == t2.str(), "trace determinism");
  check(r1.model.to_json().dump() == r2.model.to_json().dump(), "model determinism");
  check(r1.lib.to_json().dump() == r2.lib.to_json().dump(), "network determinism");

  std::string detail = failed.empty() ? "all fixtures and determinism checks hold" : "failed:";
  for (const auto& f : failed) detail += " " + f;
  return {failed.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"halving example", halving},
      {"value iteration", value_iteration},
      {"rule soundness", rule_soundness},
      {"hint availability", hint_availability},
      {"labeler oracle", labeler},
      {"unordered matching", unordered_dispatch},
      {"penalty reduces false negatives", penalty_fn},
      {"state-based beats state-free AUC", planted_auc},
      {"A/B direction", ab_direction},
      {"KS shift", ks_shift},
      {"metrics arithmetic and determinism", metrics_and_determinism},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
