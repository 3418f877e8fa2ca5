#pragma once

// Performance, hint justification, help-behavior rates, targeted-rule
// counts and the two-sample Kolmogorov-Smirnov test.

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "hnu/hint.hpp"
#include "hnu/search.hpp"
#include "hnu/stepscore.hpp"
#include "hnu/trace.hpp"

namespace hnu {

inline constexpr double kActionTimeCap = 300;

inline double capped_seconds(const std::vector<TraceEvent>& events, double cap = kActionTimeCap) {
  double t = 0;
  for (const TraceEvent& e : events) t += std::min(e.action_time, cap);
  return t;
}

struct Performance {
  std::size_t length = 0;  // derivations in completed problems
  std::size_t completed = 0;
  double time_minutes = 0;
  std::size_t applications = 0;
  std::size_t correct = 0;

  std::optional<double> accuracy() const {
    if (!applications) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(applications);
  }
};

/// Performance over a section given as one event list per problem attempt.
inline Performance performance(const std::vector<std::vector<TraceEvent>>& attempts) {
  Performance p;
  for (const auto& events : attempts) {
    std::size_t derived = 0;
    bool complete = false;
    for (const TraceEvent& e : events) {
      if (e.kind == EventKind::kDerive) {
        ++p.applications;
        if (*e.correct) {
          ++p.correct;
          ++derived;
        }
      }
      complete = complete || e.kind == EventKind::kProblemComplete;
    }
    if (complete) {
      ++p.completed;
      p.length += derived;
    }
    p.time_minutes += capped_seconds(events) / 60;
  }
  return p;
}

struct HintCounts {
  std::size_t proactive = 0;
  std::size_t on_demand = 0;
  std::size_t proactive_justified = 0;
  std::size_t on_demand_justified = 0;

  std::size_t issued() const { return proactive + on_demand; }
  std::size_t justified() const { return proactive_justified + on_demand_justified; }

  static std::optional<double> ratio(std::size_t num, std::size_t den) {
    if (!den) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  }
  std::optional<double> hjr() const { return ratio(justified(), issued()); }
  std::optional<double> proactive_hjr() const { return ratio(proactive_justified, proactive); }
  std::optional<double> on_demand_hjr() const { return ratio(on_demand_justified, on_demand); }

  HintCounts& operator+=(const HintCounts& o) {
    proactive += o.proactive;
    on_demand += o.on_demand;
    proactive_justified += o.proactive_justified;
    on_demand_justified += o.on_demand_justified;
    return *this;
  }
};

inline HintCounts hint_counts(const std::vector<Hint>& hints) {
  HintCounts c;
  for (const Hint& h : hints) {
    const bool pro = h.agency == Agency::kProactive;
    (pro ? c.proactive : c.on_demand) += 1;
    if (h.justified) (pro ? c.proactive_justified : c.on_demand_justified) += 1;
  }
  return c;
}

/// Justified fraction of issued hints; absent when none were issued.
inline std::optional<double> hjr(const std::vector<Hint>& hints) { return hint_counts(hints).hjr(); }

/// The same counts read off a trace.
inline HintCounts hint_counts(const std::vector<TraceEvent>& events) {
  HintCounts c;
  std::map<std::pair<std::string, std::uint64_t>, EventKind> kind_of;
  for (const TraceEvent& e : events) {
    if (is_hint_event(e.kind)) {
      kind_of[{e.student + "\x1f" + e.problem, e.seq}] = e.kind;
      (e.kind == EventKind::kProactiveHint ? c.proactive : c.on_demand) += 1;
    } else if (e.kind == EventKind::kHintJustified) {
      auto it = kind_of.find({e.student + "\x1f" + e.problem, *e.hint_seq});
      if (it == kind_of.end()) continue;
      (it->second == EventKind::kProactiveHint ? c.proactive_justified : c.on_demand_justified) += 1;
    }
  }
  return c;
}

/// What the help-behavior rates need to know about one training step.
struct StepObservation {
  bool observed_helpneed = false;
  std::optional<bool> predicted_helpneed;
  bool hint_requested = false;
  bool hint_received = false;  // requested or proactive
};

inline std::vector<StepObservation> observe_steps(const std::vector<StepRecord>& steps,
                                                  const std::vector<LabeledStep>& labels) {
  std::vector<StepObservation> out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    StepObservation o;
    o.observed_helpneed = labels.at(i).helpneed();
    if (steps[i].prediction) o.predicted_helpneed = steps[i].prediction->helpneed;
    o.hint_requested = steps[i].hints_requested > 0;
    o.hint_received = steps[i].hint_received();
    out.push_back(o);
  }
  return out;
}

struct HelpBehaviorReport {
  std::size_t steps = 0;  // denominator
  std::size_t avoidance_steps = 0;
  std::size_t abuse_steps = 0;
  std::size_t appropriate_steps = 0;

  static double pct(std::size_t n, std::size_t d) { return d ? 100.0 * static_cast<double>(n) / static_cast<double>(d) : 0; }
  double avoidance() const { return pct(avoidance_steps, steps); }
  double abuse() const { return pct(abuse_steps, steps); }
  double appropriateness() const { return pct(appropriate_steps, steps); }
};

class MetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Possible help avoidance: observed HelpNeed with no hint requested or
/// received. Possible abuse: neither predicted nor observed HelpNeed, yet a
/// hint was requested. Appropriateness: predicted HelpNeed and a hint
/// received. All as a share of the given steps.
inline HelpBehaviorReport help_behaviors(const std::vector<StepObservation>& steps) {
  HelpBehaviorReport r;
  for (const StepObservation& s : steps) {
    if (!s.predicted_helpneed) throw MetricsError("step without a prediction record");
    ++r.steps;
    if (s.observed_helpneed && !s.hint_received && !s.hint_requested) ++r.avoidance_steps;
    if (!*s.predicted_helpneed && !s.observed_helpneed && s.hint_requested) ++r.abuse_steps;
    if (*s.predicted_helpneed && s.hint_received) ++r.appropriate_steps;
  }
  return r;
}

struct TargetedRuleStats {
  std::size_t correct_targeted = 0;
  std::size_t incorrect_targeted = 0;
  std::size_t correct_other = 0;
  std::size_t incorrect_other = 0;

  std::size_t total() const { return correct_targeted + incorrect_targeted + correct_other + incorrect_other; }
};

inline TargetedRuleStats targeted_rule_stats(const std::vector<TraceEvent>& events, const std::set<RuleId>& targeted) {
  TargetedRuleStats s;
  for (const TraceEvent& e : events) {
    if (e.kind != EventKind::kDerive) continue;
    const bool t = targeted.count(*e.rule) > 0;
    if (*e.correct) (t ? s.correct_targeted : s.correct_other) += 1;
    else (t ? s.incorrect_targeted : s.incorrect_other) += 1;
  }
  return s;
}

inline TargetedRuleStats targeted_rule_stats(const std::vector<TraceEvent>& events, const Problem& problem) {
  return targeted_rule_stats(events, targeted_rules(problem, problem.optimal_length));
}

struct KsResult {
  double d = 0;
  double p = 1;
};

namespace detail {

inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

/// Survival function of the Kolmogorov distribution.
inline double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1;
  double sum = 0, sign = 1;
  for (int k = 1; k <= 200; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) <= 1e-12 * std::abs(sum)) break;
    sign = -sign;
  }
  return std::clamp(2 * sum, 0.0, 1.0);
}

}  // namespace detail

/// Two-sample KS test. The p-value uses the asymptotic distribution with
/// the effective-n correction, or, with `exact`, enumerates every split of
/// the pooled sample (at most 20 values).
inline KsResult ks_test(const std::vector<double>& a, const std::vector<double>& b, bool exact = false) {
  if (a.empty() || b.empty()) throw MetricsError("ks_test needs two nonempty samples");
  KsResult r;
  r.d = detail::ks_statistic(a, b);
  if (!exact) {
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double en = std::sqrt(na * nb / (na + nb));
    r.p = detail::kolmogorov_q((en + 0.12 + 0.11 / en) * r.d);
    return r;
  }
  const std::size_t n = a.size() + b.size();
  if (n > 20) throw MetricsError("exact ks_test is limited to 20 pooled values");
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::size_t hits = 0, total = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) != a.size()) continue;
    std::vector<double> x, y;
    for (std::size_t i = 0; i < n; ++i) ((mask >> i) & 1u ? x : y).push_back(pooled[i]);
    ++total;
    if (detail::ks_statistic(x, y) >= r.d - 1e-12) ++hits;
  }
  r.p = static_cast<double>(hits) / static_cast<double>(total);
  return r;
}

}  // namespace hnu
