#pragma once

// Hint policies: the adaptive policy acts on HelpNeed predictions at the
// start of each step; control and random baselines; on-demand hints.

#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "hnu/hint.hpp"
#include "hnu/predictor.hpp"

namespace hnu {

enum class PolicyKind : std::uint8_t { kAdaptive, kControl, kRandom };

struct PolicyConfig {
  PolicyKind kind = PolicyKind::kControl;
  double probability = 0;  // random(p) only
  bool penalty = true;
  KeyMode key_mode = KeyMode::kUnordered;
  std::size_t cooldown = 0;  // steps that must pass between proactive hints
};

class PolicyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// "adaptive", "control" or "random:p".
inline PolicyConfig parse_policy(std::string_view text) {
  PolicyConfig c;
  if (text == "adaptive") {
    c.kind = PolicyKind::kAdaptive;
  } else if (text == "control") {
    c.kind = PolicyKind::kControl;
  } else if (text.starts_with("random:")) {
    c.kind = PolicyKind::kRandom;
    std::string num(text.substr(7));
    std::size_t used = 0;
    try {
      c.probability = std::stod(num, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (num.empty() || used != num.size() || !(c.probability >= 0 && c.probability <= 1))
      throw PolicyError("random policy needs a probability in [0, 1]: '" + std::string(text) + "'");
  } else {
    throw PolicyError("unknown policy '" + std::string(text) + "'");
  }
  return c;
}

inline std::string policy_name(const PolicyConfig& c) {
  switch (c.kind) {
    case PolicyKind::kAdaptive: return "adaptive";
    case PolicyKind::kControl: return "control";
    case PolicyKind::kRandom: {
      std::ostringstream o;
      o << "random:" << c.probability;
      return o.str();
    }
  }
  return "";
}

struct StepDecision {
  bool proactive = false;
  std::optional<PredictionRecord> prediction;
};

/// The policy for one attempt. Feed it every completed step; ask it at the
/// start of every step. Predictions are logged under every policy when a
/// model is available; only the adaptive policy acts on them.
class AttemptPolicy {
 public:
  AttemptPolicy(const PolicyConfig& config, const HelpNeedModel* model, const NetworkLibrary* features,
                const Problem& problem, const StudentHistory& history)
      : config_(config),
        model_(model),
        tracker_(problem, features ? features->get(problem.id, config.key_mode) : nullptr,
                 model ? model->t75(problem.id) : INFINITY, config.penalty, history) {
    if (config.kind == PolicyKind::kAdaptive && !model) throw PolicyError("adaptive policy needs a model");
  }

  void observe(const StepRecord& s) {
    tracker_.observe(s);
    ++since_proactive_;
  }

  /// The prediction for a step starting from `state`, without acting on it.
  std::optional<PredictionRecord> predict(const ProofState& state) const {
    if (!model_) return std::nullopt;
    Prediction p = model_->predict(tracker_.features(canonical_state(state, config_.key_mode)));
    return PredictionRecord{p.score, p.classifier, p.helpneed, config_.kind != PolicyKind::kAdaptive};
  }

  StepDecision on_step_start(const ProofState& state, std::mt19937_64& rng) {
    StepDecision d;
    d.prediction = predict(state);
    const bool ready = !issued_any_ || since_proactive_ >= config_.cooldown;
    switch (config_.kind) {
      case PolicyKind::kAdaptive: d.proactive = d.prediction->helpneed && ready; break;
      case PolicyKind::kControl: break;
      case PolicyKind::kRandom: {
        std::bernoulli_distribution coin(config_.probability);
        d.proactive = coin(rng) && ready;
        break;
      }
    }
    if (d.proactive) {
      issued_any_ = true;
      since_proactive_ = 0;
    }
    return d;
  }

  const FeatureTracker& tracker() const { return tracker_; }

 private:
  PolicyConfig config_;
  const HelpNeedModel* model_;
  FeatureTracker tracker_;
  bool issued_any_ = false;
  std::size_t since_proactive_ = 0;
};

/// On-demand hints come from the unordered network, whatever the policy.
inline Hint on_demand_hint(const NetworkLibrary* lib, const ProofState& state, const Problem& problem,
                           ProofCache* cache = nullptr) {
  const InteractionNetwork* net = lib ? lib->get(problem.id, KeyMode::kUnordered) : nullptr;
  Hint h = next_step_hint(net, state, problem, cache);
  h.agency = Agency::kOnDemand;
  return h;
}

inline Hint proactive_hint(const NetworkLibrary* lib, const ProofState& state, const Problem& problem,
                           ProofCache* cache = nullptr) {
  Hint h = on_demand_hint(lib, state, problem, cache);
  h.agency = Agency::kProactive;
  return h;
}

}  // namespace hnu
