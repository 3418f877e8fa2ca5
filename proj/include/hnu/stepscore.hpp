#pragma once

// Step efficiency, the hint-usage penalty on quality gains, duration
// thresholds and step-behavior labels.

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hnu/network.hpp"

namespace hnu {

struct PenalizedGain {
  double post_quality = 0;
  double absolute_progress = 0;
  double relative_progress = 0;
};

/// A step completed by justifying a hint keeps only half of its quality
/// gain (or loss).
inline PenalizedGain penalize_gain(double pre_quality, double post_quality_raw, double start_quality, bool hint_used) {
  PenalizedGain g;
  g.post_quality = hint_used ? pre_quality + (post_quality_raw - pre_quality) / 2 : post_quality_raw;
  g.relative_progress = g.post_quality - pre_quality;
  g.absolute_progress = g.post_quality - start_quality;
  return g;
}

struct ProgressVector {
  double relative_local = 0;
  double relative_global = 0;
  double absolute_local = 0;
  double absolute_global = 0;
  double post_local = 0;
  double post_global = 0;

  std::vector<double> as_features() const {
    return {relative_local, relative_global, absolute_local, absolute_global, post_local, post_global};
  }
};

inline ProgressVector progress(const Quality& pre, const Quality& post, const Quality& start, bool hint_used,
                               bool penalty) {
  const bool halve = hint_used && penalty;
  PenalizedGain l = penalize_gain(pre.local, post.local, start.local, halve);
  PenalizedGain g = penalize_gain(pre.global, post.global, start.global, halve);
  return ProgressVector{l.relative_progress, g.relative_progress, l.absolute_progress,
                        g.absolute_progress, l.post_quality,      g.post_quality};
}

enum class ProgressKind : std::uint8_t { kRelative, kAbsolute };
enum class QualityKind : std::uint8_t { kLocal, kGlobal };

struct EfficiencyCombo {
  ProgressKind progress = ProgressKind::kAbsolute;
  QualityKind quality = QualityKind::kGlobal;
};

inline double progress_component(const ProgressVector& p, EfficiencyCombo c) {
  if (c.progress == ProgressKind::kRelative) return c.quality == QualityKind::kLocal ? p.relative_local : p.relative_global;
  return c.quality == QualityKind::kLocal ? p.absolute_local : p.absolute_global;
}

inline bool efficient(const ProgressVector& p, EfficiencyCombo c = {}) { return progress_component(p, c) >= 0; }

/// Nearest-rank 75th percentile: the ceil(0.75 n)-th smallest duration.
inline double duration_threshold(std::vector<double> durations) {
  if (durations.empty()) throw std::invalid_argument("duration_threshold of an empty list");
  std::sort(durations.begin(), durations.end());
  auto rank = static_cast<std::size_t>(std::ceil(0.75 * static_cast<double>(durations.size())));
  return durations[std::max<std::size_t>(rank, 1) - 1];
}

enum class StepBehavior : std::uint8_t { kExpert, kStrategic, kOpportunistic, kFarOff, kFutile };

inline constexpr StepBehavior kAllBehaviors[] = {StepBehavior::kExpert, StepBehavior::kStrategic,
                                                 StepBehavior::kOpportunistic, StepBehavior::kFarOff,
                                                 StepBehavior::kFutile};

inline std::string_view behavior_name(StepBehavior b) {
  switch (b) {
    case StepBehavior::kExpert: return "expert";
    case StepBehavior::kStrategic: return "strategic";
    case StepBehavior::kOpportunistic: return "opportunistic";
    case StepBehavior::kFarOff: return "far_off";
    case StepBehavior::kFutile: return "futile";
  }
  return "";
}

inline bool is_helpneed(StepBehavior b) { return b == StepBehavior::kFarOff || b == StepBehavior::kFutile; }

struct StepFlags {
  bool long_step = false;
  bool efficient = true;
};

/// Labels a sequence of steps from one attempt. Runs of two or more quick
/// inefficient steps are Far Off throughout; a lone one is Opportunistic.
inline std::vector<StepBehavior> label_steps(const std::vector<StepFlags>& flags) {
  std::vector<StepBehavior> out(flags.size());
  std::size_t i = 0;
  while (i < flags.size()) {
    const StepFlags& f = flags[i];
    if (f.efficient) {
      out[i] = f.long_step ? StepBehavior::kStrategic : StepBehavior::kExpert;
      ++i;
    } else if (f.long_step) {
      out[i] = StepBehavior::kFutile;
      ++i;
    } else {
      std::size_t j = i;
      while (j < flags.size() && !flags[j].long_step && !flags[j].efficient) ++j;
      StepBehavior b = j - i >= 2 ? StepBehavior::kFarOff : StepBehavior::kOpportunistic;
      for (; i < j; ++i) out[i] = b;
    }
  }
  return out;
}

/// Per-problem t75 values, frozen once computed from a training corpus.
using ThresholdTable = std::map<std::string, double>;

inline ThresholdTable duration_thresholds(const std::vector<std::vector<StepRecord>>& attempts) {
  std::map<std::string, std::vector<double>> by_problem;
  for (const auto& a : attempts)
    for (const StepRecord& s : a) by_problem[s.problem].push_back(s.duration);
  ThresholdTable t;
  for (auto& [id, d] : by_problem) t[id] = duration_threshold(std::move(d));
  return t;
}

struct LabeledStep {
  ProgressVector progress;
  bool long_step = false;
  bool efficient = true;
  StepBehavior behavior = StepBehavior::kExpert;
  bool helpneed() const { return is_helpneed(behavior); }
};

/// Scores and labels every step of one attempt against `net`. Steps whose
/// states are missing from the network throw NetworkError.
inline std::vector<LabeledStep> label_attempt(const std::vector<StepRecord>& steps, const InteractionNetwork& net,
                                              double t75, bool penalty, EfficiencyCombo combo = {}) {
  std::vector<LabeledStep> out;
  if (steps.empty()) return out;
  const KeyMode mode = net.key_mode();
  const Quality start = quality(net, net.start_key());
  std::vector<StepFlags> flags;
  for (const StepRecord& s : steps) {
    LabeledStep l;
    l.progress = progress(quality(net, s.pre_key(mode)), quality(net, s.post_key(mode)), start, s.hint_used, penalty);
    l.long_step = s.duration > t75;
    l.efficient = efficient(l.progress, combo);
    flags.push_back(StepFlags{l.long_step, l.efficient});
    out.push_back(l);
  }
  auto behaviors = label_steps(flags);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].behavior = behaviors[i];
  return out;
}

}  // namespace hnu
