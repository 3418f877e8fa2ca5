#pragma once

// Synthetic studies of the predictor and the scoring: how often held-out
// steps reach the state-based classifier under each key mode, planted
// signal for the two classifiers, and the shift the hint penalty causes in
// progress scores.

#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "hnu/simulator.hpp"

namespace hnu {

/// Students working `problems` with a proactive hint offered on each step
/// with probability `hint_probability`.
inline Cohort hint_corpus(std::string_view tag, std::size_t n, std::uint64_t seed, const ProfileDistribution& dist,
                          const std::vector<Problem>& problems, double hint_probability, Workbench& wb) {
  PolicyConfig policy;
  policy.kind = PolicyKind::kRandom;
  policy.probability = hint_probability;
  AttemptSetup setup{&policy, nullptr, nullptr, nullptr, true};
  return simulate_cohort(tag, n, seed, dist, problems, setup, wb);
}

/// Students split into two groups after a seeded shuffle of the sorted ids.
inline std::pair<std::vector<StudentSteps>, std::vector<StudentSteps>> split_students(
    std::vector<StudentSteps> students, double test_share, std::uint64_t seed) {
  std::sort(students.begin(), students.end(),
            [](const StudentSteps& a, const StudentSteps& b) { return a.student < b.student; });
  std::mt19937_64 rng(seed);
  std::shuffle(students.begin(), students.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_share * static_cast<double>(students.size())));
  std::vector<StudentSteps> test(students.begin(), students.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<StudentSteps> train(students.begin() + static_cast<std::ptrdiff_t>(n_test), students.end());
  return {train, test};
}

/// Every student solves every problem along one of its shortest proofs,
/// picked at random, deriving the proof's statements in a random order
/// among those justifiable at each point.
inline std::vector<TraceEvent> shuffled_order_corpus(std::size_t n, std::uint64_t seed,
                                                     const std::vector<Problem>& problems, Workbench& wb) {
  std::vector<TraceEvent> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = make_stream(seed, "shuffled", i, 1);
    std::ostringstream id;
    id << "shuffled-" << std::setw(3) << std::setfill('0') << i + 1;
    for (const Problem& p : problems) {
      const auto& proofs = wb.proofs(p);
      if (proofs.empty()) throw HintError("no shortest proof for " + p.id);
      std::vector<Expr> todo = proofs[std::uniform_int_distribution<std::size_t>(0, proofs.size() - 1)(rng)];
      ProofState state = ProofState::start(p);
      std::uint64_t seq = 0;
      std::lognormal_distribution<double> pace(std::log(20.0), 0.4);
      while (!todo.empty()) {
        std::vector<std::pair<std::size_t, Application>> ready;
        for (std::size_t k = 0; k < todo.size(); ++k)
          if (auto app = find_justification(state, p, todo[k])) ready.emplace_back(k, *app);
        if (ready.empty()) throw HintError("shortest proof cannot be replayed for " + p.id);
        auto [k, app] = ready[std::uniform_int_distribution<std::size_t>(0, ready.size() - 1)(rng)];
        state.derive(app.rule, app.premises, app.derived);
        todo.erase(todo.begin() + static_cast<std::ptrdiff_t>(k));
        TraceEvent e;
        e.student = id.str();
        e.problem = p.id;
        e.seq = ++seq;
        e.kind = EventKind::kDerive;
        e.rule = app.rule;
        e.premises = app.premises;
        e.statement = app.derived.str();
        e.correct = true;
        e.action_time = pace(rng);
        out.push_back(std::move(e));
      }
      TraceEvent done;
      done.student = id.str();
      done.problem = p.id;
      done.seq = ++seq;
      done.kind = EventKind::kProblemComplete;
      out.push_back(std::move(done));
    }
  }
  return out;
}

struct DispatchRates {
  std::size_t steps = 0;
  double ordered = 0;  // % of held-out steps
  double unordered = 0;
};

/// Networks are built from the training students; the rates are the share
/// of the test students' steps whose features include the state-based
/// block, that is, whose state was found in the network.
inline DispatchRates dispatch_rates(const std::vector<StudentSteps>& train, const std::vector<StudentSteps>& test,
                                    const std::vector<Problem>& problems, const ValueIterationParams& vi = {}) {
  const NetworkLibrary lib = NetworkLibrary::build(all_attempts(train), problems, vi);
  const ThresholdTable t75 = duration_thresholds(all_attempts(train));
  DispatchRates r;
  for (KeyMode mode : {KeyMode::kOrdered, KeyMode::kUnordered}) {
    std::size_t steps = 0, matched = 0;
    for (const StudentSteps& s : test) {
      StudentHistory history;
      for (std::size_t a = 0; a < s.attempts.size(); ++a) {
        const Problem& p = *s.problems[a];
        auto t = t75.find(p.id);
        FeatureTracker tracker(p, lib.get(p.id, mode), t == t75.end() ? INFINITY : t->second, false, history);
        for (const StepRecord& step : s.attempts[a]) {
          ++steps;
          if (tracker.features(step.pre_key(mode)).state_based) ++matched;
          tracker.observe(step);
        }
        record_attempt(history, s.events[a], tracker);
      }
    }
    const double pct = steps ? 100.0 * static_cast<double>(matched) / static_cast<double>(steps) : 0;
    (mode == KeyMode::kOrdered ? r.ordered : r.unordered) = pct;
    r.steps = steps;
  }
  return r;
}

/// Examples where HelpNeed depends on a latent per-step difficulty that
/// shows only in the six state-based features, plus a weaker per-student
/// propensity that shows in the history features. About `matched_share` of
/// steps carry the state-based block.
inline std::vector<Example> planted_signal_examples(std::size_t students, std::size_t steps_per_student,
                                                    std::uint64_t seed, double matched_share = 0.85) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0, 1);
  std::uniform_real_distribution<double> unit(0, 1);
  std::vector<Example> out;
  for (std::size_t i = 0; i < students; ++i) {
    const double propensity = normal(rng);
    const std::string id = "planted-" + std::to_string(i + 1);
    double elapsed = 0;
    for (std::size_t k = 0; k < steps_per_student; ++k) {
      const double latent = normal(rng);
      const double logit = 2.5 * latent + 0.6 * propensity - 1.0;
      const int label = unit(rng) < 1 / (1 + std::exp(-logit)) ? 1 : 0;
      Example e;
      e.student = id;
      e.label = label;
      const double prev = std::exp(3 + 0.4 * normal(rng));
      elapsed += prev;
      e.x.state_free = {prev,
                        static_cast<double>(k % 12),
                        elapsed,
                        std::floor(6 * unit(rng)),
                        std::floor(3 * unit(rng)),
                        std::floor(3 * unit(rng)),
                        std::floor(2 * unit(rng)),
                        std::floor(2 * unit(rng)),
                        std::floor(3 * unit(rng)),
                        std::floor(2 * unit(rng)),
                        std::clamp(0.3 + 0.1 * propensity + 0.05 * normal(rng), 0.0, 1.0),
                        unit(rng),
                        0.7 + 0.3 * unit(rng),
                        static_cast<double>(3 + k % 5)};
      if (unit(rng) < matched_share) {
        auto noisy = [&](double scale) { return scale * (-latent + 0.5 * normal(rng)); };
        const double rel_local = noisy(0.3), rel_global = noisy(0.2);
        const double post_local = std::clamp(50 + noisy(20), 0.0, 100.0);
        const double post_global = std::clamp(50 + noisy(15), 0.0, 100.0);
        e.x.state_based = std::array<double, 6>{rel_local, rel_global, noisy(12), noisy(8), post_local, post_global};
      }
      out.push_back(std::move(e));
    }
  }
  return out;
}

struct PenaltyFnRates {
  double on = 0;   // % of held-out steps, per-student mean
  double off = 0;
};

/// Trains one model with the hint penalty and one without on the same
/// students and scores both on held-out students against the unpenalized
/// labels. Networks and thresholds come from the whole corpus.
inline PenaltyFnRates penalty_fn_rates(const std::vector<StudentSteps>& students, const std::vector<Problem>& problems,
                                       std::uint64_t seed, const ForestParams& forest = {},
                                       const ValueIterationParams& vi = {}) {
  const NetworkLibrary lib = NetworkLibrary::build(all_attempts(students), problems, vi);
  const ThresholdTable t75 = duration_thresholds(all_attempts(students));
  auto [train, test] = split_students(students, 1.0 / 3, seed);
  PenaltyFnRates r;
  for (bool penalty : {true, false}) {
    ModelConfig config{forest, 0.5, penalty, KeyMode::kUnordered};
    config.forest.seed = splitmix64(seed);
    HelpNeedModel m = HelpNeedModel::train(build_examples(train, lib, lib, t75, config.key_mode, penalty), config, t75);
    auto rows = evaluate_model(m, build_examples(test, lib, lib, t75, config.key_mode, penalty, false), "holdout");
    (penalty ? r.on : r.off) = 100 * rows.front().fn_rate;
  }
  return r;
}

/// Absolute global progress of every step in `students`, scored against
/// `lib` (unordered) with or without the hint penalty. Steps whose states
/// are missing from the network are skipped.
inline std::vector<double> absolute_global_progress(const std::vector<StudentSteps>& students,
                                                    const NetworkLibrary& lib, bool penalty) {
  std::vector<double> out;
  for (const StudentSteps& s : students)
    for (std::size_t a = 0; a < s.attempts.size(); ++a) {
      const InteractionNetwork* net = lib.get(s.problems[a]->id, KeyMode::kUnordered);
      if (!net) continue;
      const NodeStats* start = net->lookup(net->start_key());
      if (!start) continue;
      const Quality q0{start->global_quality, start->local_quality};
      for (const StepRecord& step : s.attempts[a]) {
        const NodeStats* pre = net->lookup(step.pre_unordered);
        const NodeStats* post = net->lookup(step.post_unordered);
        if (!pre || !post) continue;
        out.push_back(progress(Quality{pre->global_quality, pre->local_quality},
                               Quality{post->global_quality, post->local_quality}, q0, step.hint_used, penalty)
                          .absolute_global);
      }
    }
  return out;
}

/// Share of steps that carried out a hint.
inline double hint_justified_share(const std::vector<StudentSteps>& students) {
  std::size_t steps = 0, used = 0;
  for (const StudentSteps& s : students)
    for (const auto& a : s.attempts)
      for (const StepRecord& step : a) {
        ++steps;
        used += step.hint_used ? 1 : 0;
      }
  return steps ? static_cast<double>(used) / static_cast<double>(steps) : 0;
}

}  // namespace hnu
