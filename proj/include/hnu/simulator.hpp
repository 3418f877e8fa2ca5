#pragma once

// Simulated students, the pretest / training / posttest protocol with
// stratified condition assignment, and seeded A/B experiments.

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "hnu/metrics.hpp"
#include "hnu/policy.hpp"
#include "hnu/problems.hpp"

namespace hnu {

struct StudentProfile {
  double skill = 0.6;            // chance of an optimal move
  double error_rate = 0.1;       // chance an application is botched first
  double speed_median = 20;      // seconds per step
  double speed_sigma = 0.4;      // lognormal sigma
  double help_propensity = 0.3;  // chance of asking for a hint when stuck
  double hint_adoption = 0.8;    // chance of acting on a received hint
  double learning_rate = 1.05;   // skill multiplier per justified hint
  double stuck_rate = 0.25;        // chance of getting stuck, scaled by (1.5 - skill)
  double stuck_persistence = 0.6;  // chance of staying stuck on the next step
  double delete_rate = 0.02;

  void validate() const {
    for (double p : {skill, error_rate, help_propensity, hint_adoption, stuck_rate, stuck_persistence, delete_rate})
      if (!(p >= 0 && p <= 1)) throw std::invalid_argument("profile probabilities must lie in [0, 1]");
    if (!(speed_median > 0) || !(speed_sigma >= 0)) throw std::invalid_argument("durations must be positive");
    if (!(learning_rate >= 1)) throw std::invalid_argument("learning_rate must be at least 1");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(StudentProfile, skill, error_rate, speed_median, speed_sigma,
                                                help_propensity, hint_adoption, learning_rate, stuck_rate,
                                                stuck_persistence, delete_rate)

struct Range {
  double lo = 0;
  double hi = 0;
  double draw(std::mt19937_64& rng) const { return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng); }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Range, lo, hi)

/// Independent uniform ranges for each profile field.
struct ProfileDistribution {
  Range skill{0.3, 0.8};
  Range error_rate{0.03, 0.15};
  Range speed_median{12, 30};
  Range speed_sigma{0.3, 0.5};
  Range help_propensity{0.1, 0.5};
  Range hint_adoption{0.6, 0.95};
  Range learning_rate{1.02, 1.08};
  Range stuck_rate{0.25, 0.4};
  Range stuck_persistence{0.5, 0.7};
  Range delete_rate{0.0, 0.04};

  StudentProfile draw(std::mt19937_64& rng) const {
    StudentProfile p;
    p.skill = skill.draw(rng);
    p.error_rate = error_rate.draw(rng);
    p.speed_median = speed_median.draw(rng);
    p.speed_sigma = speed_sigma.draw(rng);
    p.help_propensity = help_propensity.draw(rng);
    p.hint_adoption = hint_adoption.draw(rng);
    p.learning_rate = learning_rate.draw(rng);
    p.stuck_rate = stuck_rate.draw(rng);
    p.stuck_persistence = stuck_persistence.draw(rng);
    p.delete_rate = delete_rate.draw(rng);
    p.validate();
    return p;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ProfileDistribution, skill, error_rate, speed_median, speed_sigma,
                                                help_propensity, hint_adoption, learning_rate, stuck_rate,
                                                stuck_persistence, delete_rate)

/// A random stream that depends only on the master seed, the cohort, the
/// student and the stream number.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::string_view cohort, std::size_t student,
                                   std::uint64_t stream) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : cohort) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
  std::uint64_t x = splitmix64(seed);
  x = splitmix64(x ^ h);
  x = splitmix64(x ^ student);
  x = splitmix64(x ^ (stream + 1));
  std::seed_seq seq{static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(x >> 32)};
  return std::mt19937_64(seq);
}

struct SimStudent {
  std::string id;
  StudentProfile profile;
  double skill = 0;
  StudentHistory history;
  std::mt19937_64 behavior;
  std::mt19937_64 policy;

  SimStudent(std::string id_, const StudentProfile& p, std::mt19937_64 b, std::mt19937_64 q)
      : id(std::move(id_)), profile(p), skill(p.skill), behavior(b), policy(q) {}
};

inline SimStudent make_student(std::uint64_t seed, std::string_view cohort, std::size_t index,
                               const ProfileDistribution& dist) {
  auto profile_rng = make_stream(seed, cohort, index, 0);
  std::ostringstream id;
  id << cohort << '-' << std::setw(3) << std::setfill('0') << index + 1;
  return SimStudent(id.str(), dist.draw(profile_rng), make_stream(seed, cohort, index, 1),
                    make_stream(seed, cohort, index, 2));
}

/// Per-problem search spaces, shortest proofs from the start state, and the
/// shared proof cache.
class Workbench {
 public:
  const SearchSpace& space(const Problem& p) {
    auto it = spaces_.find(p.id);
    if (it == spaces_.end()) it = spaces_.emplace(p.id, SearchSpace::for_problem(p)).first;
    return it->second;
  }

  const std::vector<std::vector<Expr>>& proofs(const Problem& p) {
    auto it = proofs_.find(p.id);
    if (it == proofs_.end()) {
      std::vector<std::vector<Expr>> all;
      for (const Proof& proof : all_shortest_proofs(p, p.optimal_length, 32)) {
        std::vector<Expr> path;
        for (const ProofStep& s : proof.steps) path.push_back(s.derived);
        all.push_back(std::move(path));
      }
      it = proofs_.emplace(p.id, std::move(all)).first;
    }
    return it->second;
  }

  ProofCache& cache() { return cache_; }

 private:
  std::map<std::string, SearchSpace> spaces_;
  std::map<std::string, std::vector<std::vector<Expr>>> proofs_;
  ProofCache cache_;
};

/// The next step of the shortest proof from the start state that the state
/// has made most progress on: its first statement not yet derived. Falls
/// back to searching from the state itself.
inline std::optional<Application> optimal_move(const ProofState& state, const Problem& problem, Workbench& wb) {
  const std::vector<Expr>* best = nullptr;
  std::size_t best_missing = 0;
  for (const auto& path : wb.proofs(problem)) {
    std::size_t missing = 0;
    for (const Expr& e : path) missing += state.contains(e) ? 0 : 1;
    if (!best || missing < best_missing) {
      best = &path;
      best_missing = missing;
    }
  }
  if (best)
    for (const Expr& e : *best)
      if (!state.contains(e)) {
        if (auto app = find_justification(state, problem, e)) return app;
        break;
      }
  auto path = wb.cache().get(state, problem, problem.optimal_length);
  if (!path || path->empty()) return std::nullopt;
  return find_justification(state, problem, path->front());
}

/// How an attempt is run. Without a policy no predictions are made; hints
/// (proactive or on demand) only appear when `hints_allowed`.
struct AttemptSetup {
  const PolicyConfig* policy = nullptr;
  const HelpNeedModel* model = nullptr;
  const NetworkLibrary* features = nullptr;
  const NetworkLibrary* hints = nullptr;
  bool hints_allowed = false;
};

inline constexpr double kOptimalPace = 1.0;
inline constexpr double kRandomPace = 1.6;
inline constexpr double kStuckPace = 2.5;
inline constexpr double kFlailPace = 1.1;
inline constexpr double kHintedPace = 0.8;
inline constexpr double kRequestPace = 0.5;
inline constexpr double kErrorPace = 0.7;
inline constexpr double kDeletePace = 0.5;

inline std::size_t step_cap(const Problem& p) { return 4 * p.optimal_length + 12; }

/// Runs one student through one problem and returns the logged events.
inline std::vector<TraceEvent> simulate_attempt(SimStudent& st, const Problem& problem, const AttemptSetup& setup,
                                                Workbench& wb) {
  std::vector<TraceEvent> out;
  StepReplayer replay(problem);
  std::uint64_t seq = 0;
  auto& rng = st.behavior;
  const StudentProfile& prof = st.profile;
  auto roll = [&](double p) { return std::bernoulli_distribution(std::clamp(p, 0.0, 1.0))(rng); };
  auto duration = [&](double pace) {
    std::lognormal_distribution<double> d(std::log(prof.speed_median), prof.speed_sigma);
    return d(rng) * pace;
  };
  auto emit = [&](TraceEvent e) {
    e.student = st.id;
    e.problem = problem.id;
    e.seq = ++seq;
    out.push_back(e);
    replay.feed(out.back());
    return e.seq;
  };

  std::optional<AttemptPolicy> policy;
  if (setup.policy) policy.emplace(*setup.policy, setup.model, setup.features, problem, st.history);
  HintLedger ledger;
  std::set<std::uint64_t> considered;
  std::size_t observed = 0;
  const SearchSpace& space = wb.space(problem);
  bool stuck = false;

  while (!replay.state().is_goal(problem) && replay.steps().size() < step_cap(problem)) {
    const ProofState& state = replay.state();
    std::optional<PredictionRecord> prediction;
    if (policy) {
      while (observed < replay.steps().size()) policy->observe(replay.steps()[observed++]);
      StepDecision d = policy->on_step_start(state, st.policy);
      prediction = d.prediction;
      if (d.proactive && setup.hints_allowed) {
        Hint h = proactive_hint(setup.hints, state, problem, &wb.cache());
        TraceEvent e;
        e.kind = EventKind::kProactiveHint;
        e.statement = h.statement.str();
        e.source = hint_source_name(h.source);
        h.seq = emit(e);
        h.issued_at = replay.steps().size();
        ledger.issue(h);
      }
    }

    stuck = stuck ? roll(prof.stuck_persistence) : roll(prof.stuck_rate * (1.5 - st.skill));
    bool requested = false;
    for (;;) {
      std::optional<Application> app;
      double pace = kOptimalPace;
      if (const Hint* h = ledger.latest_pending(); h && considered.insert(h->seq).second && roll(prof.hint_adoption)) {
        app = find_justification(state, problem, h->statement);
        pace = kHintedPace;
      }
      if (!app) {
        if (stuck && setup.hints_allowed && !requested && roll(prof.help_propensity)) {
          Hint h = on_demand_hint(setup.hints, state, problem, &wb.cache());
          TraceEvent e;
          e.kind = EventKind::kHintRequest;
          e.action_time = duration(kRequestPace);
          e.statement = h.statement.str();
          e.source = hint_source_name(h.source);
          h.seq = emit(e);
          h.issued_at = replay.steps().size();
          ledger.issue(h);
          requested = true;
          continue;
        }
        if (!stuck && state.num_derived() > 0 && roll(prof.delete_rate)) {
          std::uniform_int_distribution<std::size_t> pick(state.num_premises(), state.size() - 1);
          TraceEvent e;
          e.kind = EventKind::kDelete;
          e.index = pick(rng);
          e.statement = state.statements()[*e.index].str();
          e.action_time = duration(kDeletePace);
          e.prediction = prediction;
          emit(e);
          break;
        }
        const bool optimal = !stuck && roll(st.skill);
        if (optimal) {
          app = optimal_move(state, problem, wb);
        } else {
          auto actions = applicable_actions(state, problem, space);
          if (!actions.empty()) app = actions[std::uniform_int_distribution<std::size_t>(0, actions.size() - 1)(rng)];
        }
        if (!app) app = optimal_move(state, problem, wb);
        if (!app) throw HintError("simulated student stranded on " + problem.id);
        if (stuck) pace = roll(0.5) ? kStuckPace : kFlailPace;
        else pace = optimal ? kOptimalPace : kRandomPace;
      }
      if (roll(prof.error_rate)) {
        Expr wrong = app->derived.op() == Op::kNot ? Not(Not(app->derived)) : Not(app->derived);
        if (check_step(state, app->rule, app->premises, wrong) == StepCheck::kIncorrect) {
          TraceEvent e;
          e.kind = EventKind::kDerive;
          e.rule = app->rule;
          e.premises = app->premises;
          e.statement = wrong.str();
          e.correct = false;
          e.action_time = duration(kErrorPace);
          emit(e);
        }
      }
      TraceEvent e;
      e.kind = EventKind::kDerive;
      e.rule = app->rule;
      e.premises = app->premises;
      e.statement = app->derived.str();
      e.correct = true;
      e.action_time = duration(pace);
      e.prediction = prediction;
      emit(e);
      if (const Hint* j = ledger.record_justification(app->derived)) {
        TraceEvent je;
        je.kind = EventKind::kHintJustified;
        je.statement = j->statement.str();
        je.hint_seq = j->seq;
        emit(je);
        st.skill = std::min(1.0, st.skill * prof.learning_rate);
        stuck = false;
      }
      break;
    }
  }
  if (replay.state().is_goal(problem)) {
    TraceEvent e;
    e.kind = EventKind::kProblemComplete;
    emit(e);
  }
  if (policy) {
    const auto& steps = replay.finish();
    while (observed < steps.size()) policy->observe(steps[observed++]);
    record_attempt(st.history, out, policy->tracker());
  }
  return out;
}

enum class Condition : std::uint8_t { kAdaptive, kControl };

inline std::string_view condition_name(Condition c) { return c == Condition::kAdaptive ? "adaptive" : "control"; }

/// Sorts students by score, pairs neighbours and flips a coin per pair for
/// which one is adaptive. An odd student out gets a coin of its own.
inline std::vector<Condition> assign_conditions(const std::vector<double>& scores, std::mt19937_64& rng) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<Condition> out(scores.size(), Condition::kControl);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < order.size(); i += 2) {
    const bool heads = coin(rng);
    if (i + 1 == order.size()) {
      out[order[i]] = heads ? Condition::kAdaptive : Condition::kControl;
      break;
    }
    out[order[i]] = heads ? Condition::kAdaptive : Condition::kControl;
    out[order[i + 1]] = heads ? Condition::kControl : Condition::kAdaptive;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cohorts and models

struct Cohort {
  std::vector<SimStudent> students;
  std::vector<TraceEvent> events;
};

/// Simulates `n` fresh students through `problems` in order under one setup.
inline Cohort simulate_cohort(std::string_view tag, std::size_t n, std::uint64_t seed,
                              const ProfileDistribution& dist, const std::vector<Problem>& problems,
                              const AttemptSetup& setup, Workbench& wb) {
  Cohort c;
  for (std::size_t i = 0; i < n; ++i) {
    SimStudent st = make_student(seed, tag, i, dist);
    for (const Problem& p : problems) {
      auto ev = simulate_attempt(st, p, setup, wb);
      c.events.insert(c.events.end(), ev.begin(), ev.end());
    }
    c.students.push_back(std::move(st));
  }
  return c;
}

inline std::vector<std::vector<StepRecord>> all_attempts(const std::vector<StudentSteps>& students) {
  std::vector<std::vector<StepRecord>> out;
  for (const StudentSteps& s : students)
    for (const auto& a : s.attempts) out.push_back(a);
  return out;
}

/// Networks, thresholds and a model from a corpus.
struct TrainedArtifacts {
  NetworkLibrary lib;
  ThresholdTable t75;
  HelpNeedModel model;
};

inline TrainedArtifacts train_from_corpus(const std::vector<TraceEvent>& network_corpus,
                                          const std::vector<TraceEvent>& training_corpus,
                                          const std::vector<Problem>& problems, const ModelConfig& config,
                                          const ValueIterationParams& vi) {
  TrainedArtifacts a;
  auto net_students = replay_students(network_corpus, problems);
  auto attempts = all_attempts(net_students);
  a.lib = NetworkLibrary::build(attempts, problems, vi);
  a.t75 = duration_thresholds(attempts);
  auto students = replay_students(training_corpus, problems);
  auto examples = build_examples(students, a.lib, a.lib, a.t75, config.key_mode, config.penalty);
  a.model = HelpNeedModel::train(examples, config, a.t75);
  return a;
}

// ---------------------------------------------------------------------------
// Reports

struct SectionStats {
  double length = 0;
  double time_minutes = 0;
  double accuracy = 0;
  double completed = 0;
};

/// One student's training-section numbers.
struct StudentRow {
  std::string student;
  Condition condition = Condition::kControl;
  double pretest_minutes = 0;
  std::array<std::size_t, 5> behaviors{};
  std::size_t steps = 0;
  std::size_t helpneed = 0;
  HintCounts hints;
  HelpBehaviorReport help;
  std::size_t predicted = 0;
  std::size_t false_negatives = 0;
  std::size_t false_positives = 0;
  std::size_t matched_ordered = 0;
  std::size_t matched_unordered = 0;
  std::size_t state_based = 0;
  std::array<Performance, 3> sections{};
};

struct ConditionReport {
  std::string condition;
  std::size_t students = 0;
  std::array<SectionStats, 3> sections{};  // pretest, training, posttest
  std::array<double, 5> behaviors{};
  double steps = 0;
  double helpneed = 0;
  double proactive = 0;
  double on_demand = 0;
  double proactive_justified = 0;
  double on_demand_justified = 0;
  double hjr = 0;
  double proactive_rate = 0;  // % of training steps
  double avoidance = 0;
  double abuse = 0;
  double appropriateness = 0;
  double fn_rate = 0;  // % of training steps, per-student mean
  double fp_rate = 0;
  double match_ordered = 0;  // % of training step starts found in the network
  double match_unordered = 0;
  double state_based_rate = 0;  // % of predictions made by the state-based forest
};

struct CohortReport {
  std::uint64_t seed = 0;
  std::size_t students = 0;
  std::string adaptive_policy;
  std::string control_policy;
  bool penalty = true;
  KeyMode key_mode = KeyMode::kUnordered;
  std::array<ConditionReport, 2> conditions{};
  std::vector<StudentRow> rows;

  const ConditionReport& adaptive() const { return conditions[0]; }
  const ConditionReport& control() const { return conditions[1]; }

  nlohmann::json to_json() const;
  std::string to_text() const;
};

inline ConditionReport summarize(const std::vector<StudentRow>& rows, Condition c) {
  ConditionReport r;
  r.condition = std::string(condition_name(c));
  std::size_t with_hints = 0;
  for (const StudentRow& s : rows) {
    if (s.condition != c) continue;
    ++r.students;
    for (std::size_t k = 0; k < 3; ++k) {
      const Performance& p = s.sections[k];
      r.sections[k].length += static_cast<double>(p.length);
      r.sections[k].time_minutes += p.time_minutes;
      r.sections[k].accuracy += p.accuracy().value_or(0);
      r.sections[k].completed += static_cast<double>(p.completed);
    }
    for (std::size_t k = 0; k < 5; ++k) r.behaviors[k] += static_cast<double>(s.behaviors[k]);
    const double steps = static_cast<double>(std::max<std::size_t>(s.steps, 1));
    r.steps += static_cast<double>(s.steps);
    r.helpneed += static_cast<double>(s.helpneed);
    r.proactive += static_cast<double>(s.hints.proactive);
    r.on_demand += static_cast<double>(s.hints.on_demand);
    r.proactive_justified += static_cast<double>(s.hints.proactive_justified);
    r.on_demand_justified += static_cast<double>(s.hints.on_demand_justified);
    if (auto h = s.hints.hjr()) {
      r.hjr += *h;
      ++with_hints;
    }
    r.proactive_rate += 100.0 * static_cast<double>(s.hints.proactive) / steps;
    r.avoidance += s.help.avoidance();
    r.abuse += s.help.abuse();
    r.appropriateness += s.help.appropriateness();
    r.fn_rate += 100.0 * static_cast<double>(s.false_negatives) / steps;
    r.fp_rate += 100.0 * static_cast<double>(s.false_positives) / steps;
    r.match_ordered += 100.0 * static_cast<double>(s.matched_ordered) / steps;
    r.match_unordered += 100.0 * static_cast<double>(s.matched_unordered) / steps;
    r.state_based_rate += 100.0 * static_cast<double>(s.state_based) / std::max<double>(1, static_cast<double>(s.predicted));
  }
  const double n = static_cast<double>(std::max<std::size_t>(r.students, 1));
  for (auto& sec : r.sections) {
    sec.length /= n;
    sec.time_minutes /= n;
    sec.accuracy /= n;
    sec.completed /= n;
  }
  for (double& b : r.behaviors) b /= n;
  for (double* v : {&r.steps, &r.helpneed, &r.proactive, &r.on_demand, &r.proactive_justified,
                    &r.on_demand_justified, &r.proactive_rate, &r.avoidance, &r.abuse, &r.appropriateness,
                    &r.fn_rate, &r.fp_rate, &r.match_ordered, &r.match_unordered, &r.state_based_rate})
    *v /= n;
  r.hjr = with_hints ? r.hjr / static_cast<double>(with_hints) : 0;
  return r;
}

inline nlohmann::json CohortReport::to_json() const {
  nlohmann::json j;
  j["version"] = 1;
  j["seed"] = seed;
  j["students"] = students;
  j["policies"] = {{"adaptive", adaptive_policy}, {"control", control_policy}};
  j["penalty"] = penalty;
  j["key_mode"] = std::string(key_mode_name(key_mode));
  j["help_behavior_denominator"] = "per-student training steps";
  const char* sections[] = {"pretest", "training", "posttest"};
  for (const ConditionReport& c : conditions) {
    nlohmann::json cj;
    cj["students"] = c.students;
    for (std::size_t k = 0; k < 3; ++k)
      cj["performance"][sections[k]] = {{"length", c.sections[k].length},
                                        {"time_minutes", c.sections[k].time_minutes},
                                        {"accuracy", c.sections[k].accuracy},
                                        {"completed", c.sections[k].completed}};
    for (StepBehavior b : kAllBehaviors)
      cj["behaviors"][std::string(behavior_name(b))] = c.behaviors[static_cast<std::size_t>(b)];
    cj["behaviors"]["helpneed"] = c.helpneed;
    cj["behaviors"]["total_steps"] = c.steps;
    cj["hints"] = {{"proactive", c.proactive},
                   {"on_demand", c.on_demand},
                   {"proactive_justified", c.proactive_justified},
                   {"on_demand_justified", c.on_demand_justified},
                   {"hjr", c.hjr},
                   {"proactive_rate_pct", c.proactive_rate}};
    cj["help_behaviors_pct"] = {
        {"possible_avoidance", c.avoidance}, {"possible_abuse", c.abuse}, {"possible_appropriateness", c.appropriateness}};
    cj["predictor"] = {{"fn_rate_pct", c.fn_rate}, {"fp_rate_pct", c.fp_rate}, {"state_based_pct", c.state_based_rate}};
    cj["match_rate_pct"] = {{"ordered", c.match_ordered}, {"unordered", c.match_unordered}};
    j["conditions"][c.condition] = std::move(cj);
  }
  nlohmann::json rj = nlohmann::json::array();
  for (const StudentRow& s : rows) {
    nlohmann::json x;
    x["student"] = s.student;
    x["condition"] = std::string(condition_name(s.condition));
    x["pretest_minutes"] = s.pretest_minutes;
    x["training_steps"] = s.steps;
    x["helpneed"] = s.helpneed;
    for (StepBehavior b : kAllBehaviors) x[std::string(behavior_name(b))] = s.behaviors[static_cast<std::size_t>(b)];
    x["proactive"] = s.hints.proactive;
    x["on_demand"] = s.hints.on_demand;
    x["justified"] = s.hints.justified();
    x["avoidance_steps"] = s.help.avoidance_steps;
    x["abuse_steps"] = s.help.abuse_steps;
    x["appropriate_steps"] = s.help.appropriate_steps;
    x["false_negatives"] = s.false_negatives;
    x["false_positives"] = s.false_positives;
    for (std::size_t k = 0; k < 3; ++k) {
      x[std::string(sections[k]) + "_length"] = s.sections[k].length;
      x[std::string(sections[k]) + "_minutes"] = s.sections[k].time_minutes;
      x[std::string(sections[k]) + "_accuracy"] = s.sections[k].accuracy().value_or(0);
    }
    rj.push_back(std::move(x));
  }
  j["rows"] = std::move(rj);
  return j;
}

inline std::string CohortReport::to_text() const {
  std::ostringstream o;
  o << std::fixed << std::setprecision(2);
  auto header = [&](const std::string& title, const std::vector<std::string>& cols) {
    o << title << '\n' << std::left << std::setw(22) << "";
    for (const auto& c : cols) o << std::right << std::setw(12) << c;
    o << '\n';
  };
  auto row = [&](const std::string& name, const std::vector<double>& vals) {
    o << std::left << std::setw(22) << name;
    for (double v : vals) o << std::right << std::setw(12) << v;
    o << '\n';
  };
  o << "seed " << seed << ", " << students << " students, penalty " << (penalty ? "on" : "off") << ", "
    << key_mode_name(key_mode) << " keys\n\n";
  header("Performance", {"adaptive", "control"});
  const char* sections[] = {"pretest", "training", "posttest"};
  for (std::size_t k = 0; k < 3; ++k) {
    row(std::string(sections[k]) + " length", {adaptive().sections[k].length, control().sections[k].length});
    row(std::string(sections[k]) + " minutes", {adaptive().sections[k].time_minutes, control().sections[k].time_minutes});
    row(std::string(sections[k]) + " accuracy", {adaptive().sections[k].accuracy, control().sections[k].accuracy});
  }
  o << '\n';
  header("Training steps", {"adaptive", "control"});
  for (StepBehavior b : kAllBehaviors) {
    const auto k = static_cast<std::size_t>(b);
    row(std::string(behavior_name(b)), {adaptive().behaviors[k], control().behaviors[k]});
  }
  row("helpneed", {adaptive().helpneed, control().helpneed});
  row("total", {adaptive().steps, control().steps});
  o << '\n';
  header("Hints", {"adaptive", "control"});
  row("proactive", {adaptive().proactive, control().proactive});
  row("on demand", {adaptive().on_demand, control().on_demand});
  row("proactive justified", {adaptive().proactive_justified, control().proactive_justified});
  row("on demand justified", {adaptive().on_demand_justified, control().on_demand_justified});
  row("hjr", {adaptive().hjr, control().hjr});
  row("proactive % steps", {adaptive().proactive_rate, control().proactive_rate});
  o << '\n';
  header("Help behaviors (% steps)", {"adaptive", "control"});
  row("possible avoidance", {adaptive().avoidance, control().avoidance});
  row("possible abuse", {adaptive().abuse, control().abuse});
  row("appropriateness", {adaptive().appropriateness, control().appropriateness});
  o << '\n';
  header("Predictor (% steps)", {"adaptive", "control"});
  row("false negatives", {adaptive().fn_rate, control().fn_rate});
  row("false positives", {adaptive().fp_rate, control().fp_rate});
  row("state-based calls", {adaptive().state_based_rate, control().state_based_rate});
  row("ordered matches", {adaptive().match_ordered, control().match_ordered});
  row("unordered matches", {adaptive().match_unordered, control().match_unordered});
  return o.str();
}

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentConfig {
  std::size_t students = 74;
  std::size_t seed_students = 40;
  std::size_t hn_students = 40;
  std::uint64_t seed = 1;
  ProfileDistribution profiles;
  PolicyConfig adaptive{PolicyKind::kAdaptive, 0, true, KeyMode::kUnordered, 0};
  PolicyConfig control{PolicyKind::kControl, 0, true, KeyMode::kUnordered, 0};
  double seed_hint_probability = 0.2;
  ForestParams forest;
  double threshold = 0.5;
  ValueIterationParams value_iteration;

  void validate() const {
    if (students < 2) throw std::invalid_argument("an experiment needs at least two students");
    if (seed_students == 0 || hn_students == 0) throw std::invalid_argument("training cohorts cannot be empty");
    if (!(seed_hint_probability >= 0 && seed_hint_probability <= 1))
      throw std::invalid_argument("seed_hint_probability must lie in [0, 1]");
    value_iteration.validate();
  }
};

inline nlohmann::json policy_to_json(const PolicyConfig& p) {
  return {{"policy", policy_name(p)},
          {"penalty", p.penalty},
          {"key_mode", std::string(key_mode_name(p.key_mode))},
          {"cooldown", p.cooldown}};
}

inline PolicyConfig policy_from_json(const nlohmann::json& j, PolicyConfig base) {
  PolicyConfig p = base;
  if (j.contains("policy")) p = parse_policy(j["policy"].get<std::string>());
  p.penalty = j.value("penalty", base.penalty);
  p.cooldown = j.value("cooldown", base.cooldown);
  if (j.contains("key_mode")) {
    auto m = parse_key_mode(j["key_mode"].get<std::string>());
    if (!m) throw std::invalid_argument("bad key_mode in policy");
    p.key_mode = *m;
  }
  return p;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  return {{"students", c.students},
          {"seed_students", c.seed_students},
          {"hn_students", c.hn_students},
          {"seed", c.seed},
          {"profiles", c.profiles},
          {"adaptive", policy_to_json(c.adaptive)},
          {"control", policy_to_json(c.control)},
          {"seed_hint_probability", c.seed_hint_probability},
          {"forest", {{"n_trees", c.forest.n_trees}, {"max_depth", c.forest.max_depth},
                      {"class1_weight", c.forest.class1_weight}}},
          {"threshold", c.threshold}};
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.students = j.value("students", c.students);
  c.seed_students = j.value("seed_students", c.seed_students);
  c.hn_students = j.value("hn_students", c.hn_students);
  c.seed = j.value("seed", c.seed);
  if (j.contains("profiles")) c.profiles = j["profiles"].get<ProfileDistribution>();
  if (j.contains("adaptive")) c.adaptive = policy_from_json(j["adaptive"], c.adaptive);
  if (j.contains("control")) c.control = policy_from_json(j["control"], c.control);
  c.seed_hint_probability = j.value("seed_hint_probability", c.seed_hint_probability);
  if (j.contains("forest")) {
    const auto& f = j["forest"];
    c.forest.n_trees = f.value("n_trees", c.forest.n_trees);
    c.forest.max_depth = f.value("max_depth", c.forest.max_depth);
    c.forest.class1_weight = f.value("class1_weight", c.forest.class1_weight);
  }
  c.threshold = j.value("threshold", c.threshold);
  c.validate();
  return c;
}

struct ExperimentResult {
  CohortReport report;
  std::vector<TraceEvent> events;  // the main cohort
  std::vector<TraceEvent> training_corpus;
  HelpNeedModel model;
  NetworkLibrary lib;
};

/// The whole pipeline:
///   1. a seed cohort works the training problems with hints offered at
///      random, giving the first networks and duration thresholds;
///   2. an HN model (no penalty, ordered keys) trained on it drives an
///      adaptive cohort;
///   3. the networks are rebuilt over both cohorts and the reported model
///      is trained on the HN-adaptive cohort with the configured penalty
///      and key mode;
///   4. the main cohort takes the pretest, is split by stratified pairing,
///      trains under its condition and takes the posttest.
inline ExperimentResult run_experiment(const ExperimentConfig& config, const std::vector<Problem>& problems) {
  config.validate();
  const auto pre = problems_in(problems, Section::kPretest);
  const auto train = problems_in(problems, Section::kTraining);
  const auto post = problems_in(problems, Section::kPosttest);
  if (train.empty()) throw std::invalid_argument("no training problems");
  Workbench wb;

  PolicyConfig seed_policy;
  seed_policy.kind = PolicyKind::kRandom;
  seed_policy.probability = config.seed_hint_probability;
  AttemptSetup seed_setup{&seed_policy, nullptr, nullptr, nullptr, true};
  Cohort seed = simulate_cohort("seed", config.seed_students, config.seed, config.profiles, train, seed_setup, wb);

  ModelConfig hn_cfg{config.forest, config.threshold, false, KeyMode::kOrdered};
  hn_cfg.forest.seed = splitmix64(config.seed ^ 0x484eULL);
  TrainedArtifacts hn = train_from_corpus(seed.events, seed.events, problems, hn_cfg, config.value_iteration);
  PolicyConfig hn_policy{PolicyKind::kAdaptive, 0, false, KeyMode::kOrdered, 0};
  AttemptSetup hn_setup{&hn_policy, &hn.model, &hn.lib, &hn.lib, true};
  Cohort hn_cohort = simulate_cohort("hn", config.hn_students, config.seed, config.profiles, train, hn_setup, wb);

  std::vector<TraceEvent> network_corpus = seed.events;
  network_corpus.insert(network_corpus.end(), hn_cohort.events.begin(), hn_cohort.events.end());
  ModelConfig hnu_cfg{config.forest, config.threshold, config.adaptive.penalty, config.adaptive.key_mode};
  hnu_cfg.forest.seed = splitmix64(config.seed ^ 0x484e55ULL);
  TrainedArtifacts hnu = train_from_corpus(network_corpus, hn_cohort.events, problems, hnu_cfg, config.value_iteration);

  // Main cohort.
  std::vector<SimStudent> students;
  std::vector<std::array<std::vector<std::vector<TraceEvent>>, 3>> logs(config.students);
  AttemptSetup quiet{};
  std::vector<double> pretest_minutes;
  for (std::size_t i = 0; i < config.students; ++i) {
    students.push_back(make_student(config.seed, "main", i, config.profiles));
    for (const Problem& p : pre) logs[i][0].push_back(simulate_attempt(students.back(), p, quiet, wb));
    pretest_minutes.push_back(performance(logs[i][0]).time_minutes);
  }
  auto assign_rng = make_stream(config.seed, "assign", 0, 0);
  const auto conditions = assign_conditions(pretest_minutes, assign_rng);
  for (std::size_t i = 0; i < config.students; ++i) {
    const PolicyConfig& pc = conditions[i] == Condition::kAdaptive ? config.adaptive : config.control;
    AttemptSetup setup{&pc, &hnu.model, &hnu.lib, &hnu.lib, true};
    for (const Problem& p : train) logs[i][1].push_back(simulate_attempt(students[i], p, setup, wb));
    for (const Problem& p : post) logs[i][2].push_back(simulate_attempt(students[i], p, quiet, wb));
  }

  ExperimentResult result;
  for (auto& l : logs)
    for (auto& sec : l)
      for (auto& a : sec) result.events.insert(result.events.end(), a.begin(), a.end());

  // Observed labels come from networks over every simulated trace, without
  // the penalty.
  std::vector<TraceEvent> everything = network_corpus;
  everything.insert(everything.end(), result.events.begin(), result.events.end());
  std::vector<std::vector<StepRecord>> label_attempts;
  for (const StudentSteps& s : replay_students(everything, problems))
    for (std::size_t a = 0; a < s.attempts.size(); ++a)
      if (s.problems[a]->section == Section::kTraining) label_attempts.push_back(s.attempts[a]);
  NetworkLibrary label_lib = NetworkLibrary::build(label_attempts, train, config.value_iteration);

  CohortReport& rep = result.report;
  rep.seed = config.seed;
  rep.students = config.students;
  rep.adaptive_policy = policy_name(config.adaptive);
  rep.control_policy = policy_name(config.control);
  rep.penalty = config.adaptive.penalty;
  rep.key_mode = config.adaptive.key_mode;
  for (std::size_t i = 0; i < config.students; ++i) {
    StudentRow row;
    row.student = students[i].id;
    row.condition = conditions[i];
    row.pretest_minutes = pretest_minutes[i];
    for (std::size_t k = 0; k < 3; ++k) row.sections[k] = performance(logs[i][k]);
    std::vector<StepObservation> obs;
    for (std::size_t a = 0; a < train.size(); ++a) {
      const Problem& p = train[a];
      const auto& ev = logs[i][1][a];
      auto steps = events_to_steps(ev, p);
      auto labels = label_attempt(steps, *label_lib.get(p.id, KeyMode::kUnordered), hnu.model.t75(p.id), false);
      auto o = observe_steps(steps, labels);
      obs.insert(obs.end(), o.begin(), o.end());
      row.hints += hint_counts(ev);
      for (std::size_t k = 0; k < steps.size(); ++k) {
        ++row.steps;
        row.behaviors[static_cast<std::size_t>(labels[k].behavior)] += 1;
        if (labels[k].helpneed()) ++row.helpneed;
        if (const auto& pr = steps[k].prediction) {
          ++row.predicted;
          if (!pr->helpneed && labels[k].helpneed()) ++row.false_negatives;
          if (pr->helpneed && !labels[k].helpneed()) ++row.false_positives;
          if (pr->classifier == Classifier::kStateBased) ++row.state_based;
        }
        if (const auto* net = hnu.lib.get(p.id, KeyMode::kOrdered); net && net->find(steps[k].pre_ordered))
          ++row.matched_ordered;
        if (const auto* net = hnu.lib.get(p.id, KeyMode::kUnordered); net && net->find(steps[k].pre_unordered))
          ++row.matched_unordered;
      }
    }
    row.help = help_behaviors(obs);
    rep.rows.push_back(std::move(row));
  }
  rep.conditions[0] = summarize(rep.rows, Condition::kAdaptive);
  rep.conditions[1] = summarize(rep.rows, Condition::kControl);
  result.training_corpus = std::move(hn_cohort.events);
  result.model = std::move(hnu.model);
  result.lib = std::move(hnu.lib);
  return result;
}

}  // namespace hnu
