#pragma once

// HelpNeed prediction: features, the state-based / state-free forest pair,
// dataset construction from traces, and recall/AUC evaluation.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "hnu/forest.hpp"
#include "hnu/stepscore.hpp"

namespace hnu {

inline constexpr int kFeatureSchemaVersion = 1;

inline const std::vector<std::string>& state_based_feature_names() {
  static const std::vector<std::string> names = {"relative_local", "relative_global", "absolute_local",
                                                 "absolute_global", "post_local",      "post_global"};
  return names;
}

inline const std::vector<std::string>& state_free_feature_names() {
  static const std::vector<std::string> names = {
      "prev_duration",  "step_index",      "elapsed",         "prior_expert",    "prior_strategic",
      "prior_opportunistic", "prior_far_off", "prior_futile",  "hints_received",  "hints_justified",
      "history_helpneed_rate", "history_hjr", "history_accuracy", "difficulty"};
  return names;
}

struct FeatureVector {
  std::optional<std::array<double, 6>> state_based;
  std::vector<double> state_free;

  /// Input row for the classifier this vector dispatches to.
  std::vector<double> row() const {
    std::vector<double> r;
    if (state_based) r.assign(state_based->begin(), state_based->end());
    r.insert(r.end(), state_free.begin(), state_free.end());
    return r;
  }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// What a student's earlier problems look like to the predictor.
struct StudentHistory {
  std::size_t problems = 0;
  double helpneed_rate_sum = 0;
  double hjr_sum = 0;
  std::size_t hjr_count = 0;
  double accuracy_sum = 0;

  void add_problem(double helpneed_rate, std::optional<double> hjr, double accuracy) {
    ++problems;
    helpneed_rate_sum += helpneed_rate;
    if (hjr) {
      hjr_sum += *hjr;
      ++hjr_count;
    }
    accuracy_sum += accuracy;
  }
  double helpneed_rate() const { return problems ? helpneed_rate_sum / static_cast<double>(problems) : 0; }
  double hjr() const { return hjr_count ? hjr_sum / static_cast<double>(hjr_count) : 0; }
  double accuracy() const { return problems ? accuracy_sum / static_cast<double>(problems) : 0; }
};

/// Follows one attempt step by step and produces the features for the next
/// step. Behavior counts use online labels: a step is labeled when it
/// completes, using only earlier steps, and steps whose states are not in
/// the network are skipped.
class FeatureTracker {
 public:
  FeatureTracker(const Problem& problem, const InteractionNetwork* net, double t75, bool penalty,
                 const StudentHistory& history)
      : problem_(problem), net_(net), t75_(t75), penalty_(penalty), history_(history) {
    if (net_) {
      if (const NodeStats* s = net_->lookup(net_->start_key())) {
        start_ = Quality{s->global_quality, s->local_quality};
        has_start_ = true;
      }
    }
  }

  void observe(const StepRecord& s) {
    ++steps_;
    elapsed_ += s.duration;
    prev_duration_ = s.duration;
    hints_received_ += s.hints_requested + s.hints_proactive;
    hints_justified_ += s.hint_used ? 1 : 0;
    last_progress_.reset();
    if (!net_) return;
    const NodeStats* pre = net_->lookup(s.pre_key(net_->key_mode()));
    const NodeStats* post = net_->lookup(s.post_key(net_->key_mode()));
    if (!pre || !post || !has_start_) {
      prev_quick_inefficient_ = false;
      return;
    }
    ProgressVector p = progress(Quality{pre->global_quality, pre->local_quality},
                                Quality{post->global_quality, post->local_quality}, start_, s.hint_used, penalty_);
    last_progress_ = p;
    const bool long_step = s.duration > t75_;
    const bool eff = efficient(p);
    StepBehavior b;
    if (eff) b = long_step ? StepBehavior::kStrategic : StepBehavior::kExpert;
    else if (long_step) b = StepBehavior::kFutile;
    else b = prev_quick_inefficient_ ? StepBehavior::kFarOff : StepBehavior::kOpportunistic;
    prev_quick_inefficient_ = !eff && !long_step;
    counts_[static_cast<std::size_t>(b)] += 1;
  }

  /// Features at the start of the next step from `current_key` (the key of
  /// the current state under the network's key mode).
  FeatureVector features(const StateKey& current_key) const {
    FeatureVector f;
    f.state_free = {prev_duration_,
                    static_cast<double>(steps_),
                    elapsed_,
                    static_cast<double>(counts_[0]),
                    static_cast<double>(counts_[1]),
                    static_cast<double>(counts_[2]),
                    static_cast<double>(counts_[3]),
                    static_cast<double>(counts_[4]),
                    static_cast<double>(hints_received_),
                    static_cast<double>(hints_justified_),
                    history_.helpneed_rate(),
                    history_.hjr(),
                    history_.accuracy(),
                    static_cast<double>(problem_.optimal_length)};
    if (!net_ || !has_start_) return f;
    const NodeStats* cur = net_->lookup(current_key);
    if (!cur) return f;
    if (steps_ == 0) {
      f.state_based = std::array<double, 6>{0, 0, 0, 0, cur->local_quality, cur->global_quality};
    } else if (last_progress_) {
      auto v = last_progress_->as_features();
      std::array<double, 6> a{};
      std::copy(v.begin(), v.end(), a.begin());
      f.state_based = a;
    }
    return f;
  }

  std::size_t steps() const { return steps_; }

  /// Share of the labeled steps so far that were HelpNeed.
  double helpneed_rate() const {
    std::size_t labeled = 0;
    for (std::size_t c : counts_) labeled += c;
    return labeled ? static_cast<double>(counts_[3] + counts_[4]) / static_cast<double>(labeled) : 0;
  }

 private:
  const Problem& problem_;
  const InteractionNetwork* net_;
  double t75_;
  bool penalty_;
  StudentHistory history_;
  Quality start_;
  bool has_start_ = false;
  std::size_t steps_ = 0;
  double elapsed_ = 0;
  double prev_duration_ = 0;
  std::size_t hints_received_ = 0;
  std::size_t hints_justified_ = 0;
  std::array<std::size_t, 5> counts_{};
  bool prev_quick_inefficient_ = false;
  std::optional<ProgressVector> last_progress_;
};

struct Prediction {
  bool helpneed = false;
  double score = 0;
  Classifier classifier = Classifier::kStateFree;
};

struct Example {
  std::string student;
  FeatureVector x;
  int label = 0;
};

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  ForestParams forest;
  double threshold = 0.5;
  bool penalty = true;
  KeyMode key_mode = KeyMode::kUnordered;
};

class HelpNeedModel {
 public:
  /// Trains both forests. The state-free forest sees every example; the
  /// state-based forest sees the examples with a matched state. A subset
  /// with one class yields a forest that always predicts that class.
  static HelpNeedModel train(const std::vector<Example>& data, const ModelConfig& config,
                             ThresholdTable thresholds = {}) {
    bool has0 = false, has1 = false;
    for (const Example& e : data) (e.label ? has1 : has0) = true;
    if (!has0 || !has1) throw ModelError("training set has a single class");
    HelpNeedModel m;
    m.config_ = config;
    m.thresholds_ = std::move(thresholds);
    std::vector<std::vector<double>> xb, xf;
    std::vector<int> yb, yf;
    for (const Example& e : data) {
      xf.push_back(e.x.state_free);
      yf.push_back(e.label);
      if (e.x.state_based) {
        xb.push_back(e.x.row());
        yb.push_back(e.label);
      }
    }
    m.state_free_ = fit_or_constant(xf, yf, config.forest, m.free_constant_);
    ForestParams pb = config.forest;
    pb.seed = splitmix64(config.forest.seed ^ 0x5bd1e995ULL);
    m.state_based_ = fit_or_constant(xb, yb, pb, m.based_constant_);
    m.examples_ = data.size();
    return m;
  }

  Prediction predict(const FeatureVector& f) const {
    if (f.state_free.size() != state_free_feature_names().size()) throw ModelError("feature schema mismatch");
    Prediction p;
    if (f.state_based) {
      p.classifier = Classifier::kStateBased;
      p.score = based_constant_ ? *based_constant_ : state_based_.score(f.row());
    } else {
      p.classifier = Classifier::kStateFree;
      p.score = free_constant_ ? *free_constant_ : state_free_.score(f.state_free);
    }
    p.helpneed = p.score >= config_.threshold;
    return p;
  }

  /// Score from the state-free forest regardless of dispatch.
  double state_free_score(const FeatureVector& f) const {
    return free_constant_ ? *free_constant_ : state_free_.score(f.state_free);
  }

  const ModelConfig& config() const { return config_; }
  const ThresholdTable& thresholds() const { return thresholds_; }
  double t75(const std::string& problem_id) const {
    auto it = thresholds_.find(problem_id);
    return it == thresholds_.end() ? INFINITY : it->second;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["version"] = 1;
    j["feature_schema"] = {{"version", kFeatureSchemaVersion},
                           {"state_based", state_based_feature_names()},
                           {"state_free", state_free_feature_names()}};
    j["threshold"] = config_.threshold;
    j["penalty"] = config_.penalty;
    j["key_mode"] = std::string(key_mode_name(config_.key_mode));
    j["t75"] = thresholds_;
    j["examples"] = examples_;
    j["state_based"] = forest_json(state_based_, based_constant_);
    j["state_free"] = forest_json(state_free_, free_constant_);
    return j;
  }

  static HelpNeedModel from_json(const nlohmann::json& j) {
    try {
      if (j.at("version").get<int>() != 1) throw ModelError("unsupported model version");
      if (j.at("feature_schema").at("version").get<int>() != kFeatureSchemaVersion)
        throw ModelError("feature schema mismatch");
      HelpNeedModel m;
      m.config_.threshold = j.at("threshold").get<double>();
      m.config_.penalty = j.at("penalty").get<bool>();
      auto mode = parse_key_mode(j.at("key_mode").get<std::string>());
      if (!mode) throw ModelError("bad key_mode");
      m.config_.key_mode = *mode;
      m.thresholds_ = j.at("t75").get<ThresholdTable>();
      m.examples_ = j.at("examples").get<std::size_t>();
      read_forest(j.at("state_based"), m.state_based_, m.based_constant_);
      read_forest(j.at("state_free"), m.state_free_, m.free_constant_);
      m.config_.forest = m.state_free_.params();
      return m;
    } catch (const nlohmann::json::exception& ex) {
      throw ModelError(std::string("malformed model: ") + ex.what());
    }
  }

 private:
  static RandomForest fit_or_constant(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                                      const ForestParams& params, std::optional<double>& constant) {
    bool has0 = false, has1 = false;
    for (int v : y) (v ? has1 : has0) = true;
    if (has0 && has1) return RandomForest::fit(x, y, params);
    constant = has1 ? 1.0 : 0.0;
    return RandomForest{};
  }

  static nlohmann::json forest_json(const RandomForest& f, const std::optional<double>& constant) {
    if (constant) return {{"constant", *constant}};
    return f.to_json();
  }

  static void read_forest(const nlohmann::json& j, RandomForest& f, std::optional<double>& constant) {
    if (j.contains("constant")) constant = j["constant"].get<double>();
    else f = RandomForest::from_json(j);
  }

  ModelConfig config_;
  ThresholdTable thresholds_;
  RandomForest state_based_;
  RandomForest state_free_;
  std::optional<double> based_constant_;
  std::optional<double> free_constant_;
  std::size_t examples_ = 0;
};

// ---------------------------------------------------------------------------
// Datasets from traces

/// A student's attempts in problem order, already replayed into steps.
struct StudentSteps {
  std::string student;
  std::vector<const Problem*> problems;
  std::vector<std::vector<StepRecord>> attempts;
  std::vector<std::vector<TraceEvent>> events;
};

inline std::vector<StudentSteps> replay_students(const std::vector<TraceEvent>& events,
                                                 const std::vector<Problem>& problems) {
  std::vector<StudentSteps> out;
  std::map<std::string, std::size_t> where;
  for (Attempt& a : group_attempts(events)) {
    const Problem* p = nullptr;
    for (const Problem& q : problems)
      if (q.id == a.problem) p = &q;
    if (!p) throw TraceError("unknown problem " + a.problem);
    auto [it, inserted] = where.emplace(a.student, out.size());
    if (inserted) out.push_back(StudentSteps{a.student, {}, {}, {}});
    StudentSteps& s = out[it->second];
    s.problems.push_back(p);
    s.attempts.push_back(events_to_steps(a.events, *p));
    s.events.push_back(std::move(a.events));
  }
  return out;
}

inline double attempt_accuracy(const std::vector<TraceEvent>& events) {
  std::size_t total = 0, correct = 0;
  for (const TraceEvent& e : events)
    if (e.kind == EventKind::kDerive) {
      ++total;
      correct += *e.correct ? 1 : 0;
    }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0;
}

inline std::optional<double> attempt_hjr(const std::vector<TraceEvent>& events) {
  std::size_t hints = 0, justified = 0;
  for (const TraceEvent& e : events) {
    hints += is_hint_event(e.kind) ? 1 : 0;
    justified += e.kind == EventKind::kHintJustified ? 1 : 0;
  }
  if (!hints) return std::nullopt;
  return static_cast<double>(justified) / static_cast<double>(hints);
}

/// Adds a finished attempt to a student's history, using the online labels
/// of the tracker that followed it.
inline void record_attempt(StudentHistory& h, const std::vector<TraceEvent>& events, const FeatureTracker& tracker) {
  h.add_problem(tracker.helpneed_rate(), attempt_hjr(events), attempt_accuracy(events));
}

/// Training examples: one per realized step, with the features available
/// when that step started and the step's offline HelpNeed label. Features
/// come from `features_lib` under `mode`; labels from `label_lib` under the
/// same mode. The penalty applies to both unless `label_penalty` says
/// otherwise for the labels.
inline std::vector<Example> build_examples(const std::vector<StudentSteps>& students, const NetworkLibrary& features_lib,
                                           const NetworkLibrary& label_lib, const ThresholdTable& t75, KeyMode mode,
                                           bool penalty, std::optional<bool> label_penalty = std::nullopt) {
  std::vector<Example> out;
  for (const StudentSteps& s : students) {
    StudentHistory history;
    for (std::size_t a = 0; a < s.attempts.size(); ++a) {
      const Problem& p = *s.problems[a];
      const auto& steps = s.attempts[a];
      auto t = t75.find(p.id);
      const double th = t == t75.end() ? INFINITY : t->second;
      const InteractionNetwork* lnet = label_lib.get(p.id, mode);
      std::vector<LabeledStep> labels;
      if (lnet) labels = label_attempt(steps, *lnet, th, label_penalty.value_or(penalty));
      FeatureTracker tracker(p, features_lib.get(p.id, mode), th, penalty, history);
      for (std::size_t k = 0; k < steps.size(); ++k) {
        if (lnet) out.push_back(Example{s.student, tracker.features(steps[k].pre_key(mode)), labels[k].helpneed() ? 1 : 0});
        tracker.observe(steps[k]);
      }
      record_attempt(history, s.events[a], tracker);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Area under the ROC curve by the rank statistic with tied ranks averaged.
/// NaN when a class is missing.
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2;
    for (std::size_t k = i; k < j; ++k) rank[order[k]] = avg;
    i = j;
  }
  double pos = 0, neg = 0, rank_sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i]) {
      pos += 1;
      rank_sum += rank[i];
    } else {
      neg += 1;
    }
  }
  if (pos == 0 || neg == 0) return NAN;
  return (rank_sum - pos * (pos + 1) / 2) / (pos * neg);
}

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  void add(bool predicted, bool actual) {
    if (predicted && actual) ++tp;
    else if (predicted) ++fp;
    else if (actual) ++fn;
    else ++tn;
  }
  double recall() const { return tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : NAN; }
  std::size_t total() const { return tp + fp + tn + fn; }
};

inline Confusion confusion(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) c.add(scores[i] >= threshold, labels[i] != 0);
  return c;
}

struct EvalRow {
  std::string name;
  std::string classifier;  // "all", "state_based", "state_free"
  std::size_t n = 0;
  double recall = NAN;
  double auc = NAN;
  double fn_rate = NAN;
  double fp_rate = NAN;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<std::string> skipped;
};

/// Scores a model on examples. Rows: all predictions as dispatched, then the
/// matched examples scored by each classifier. FN and FP rates are the mean
/// over students of their share of steps that were false negatives or
/// false positives.
inline std::vector<EvalRow> evaluate_model(const HelpNeedModel& model, const std::vector<Example>& test,
                                           const std::string& name) {
  std::vector<double> s_all, s_based, s_free_on_matched;
  std::vector<int> y_all, y_matched;
  std::map<std::string, std::array<std::size_t, 3>> per_student;  // steps, fn, fp
  for (const Example& e : test) {
    Prediction p = model.predict(e.x);
    s_all.push_back(p.score);
    y_all.push_back(e.label);
    auto& ps = per_student[e.student];
    ps[0] += 1;
    if (!p.helpneed && e.label) ps[1] += 1;
    if (p.helpneed && !e.label) ps[2] += 1;
    if (e.x.state_based) {
      s_based.push_back(p.score);
      s_free_on_matched.push_back(model.state_free_score(e.x));
      y_matched.push_back(e.label);
    }
  }
  const double th = model.config().threshold;
  double fn = 0, fp = 0;
  for (const auto& [st, c] : per_student) {
    fn += static_cast<double>(c[1]) / static_cast<double>(c[0]);
    fp += static_cast<double>(c[2]) / static_cast<double>(c[0]);
  }
  const double students = static_cast<double>(std::max<std::size_t>(per_student.size(), 1));
  std::vector<EvalRow> rows;
  rows.push_back(EvalRow{name, "all", test.size(), confusion(s_all, y_all, th).recall(), auc(s_all, y_all),
                         fn / students, fp / students});
  rows.push_back(EvalRow{name, "state_based", s_based.size(), confusion(s_based, y_matched, th).recall(),
                         auc(s_based, y_matched), NAN, NAN});
  rows.push_back(EvalRow{name, "state_free", s_free_on_matched.size(),
                         confusion(s_free_on_matched, y_matched, th).recall(), auc(s_free_on_matched, y_matched),
                         NAN, NAN});
  return rows;
}

/// Students assigned to k folds after a seeded shuffle of the sorted ids.
inline std::map<std::string, std::size_t> student_folds(const std::vector<Example>& data, std::size_t k,
                                                        std::uint64_t seed) {
  std::set<std::string> ids;
  for (const Example& e : data) ids.insert(e.student);
  std::vector<std::string> order(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::map<std::string, std::size_t> fold;
  for (std::size_t i = 0; i < order.size(); ++i) fold[order[i]] = i % k;
  return fold;
}

inline EvalRow mean_row(const std::vector<EvalRow>& rows, const std::string& name, const std::string& classifier) {
  EvalRow m{name, classifier, 0, 0, 0, 0, 0};
  std::array<std::size_t, 4> counts{};
  auto add = [&](double v, double& acc, std::size_t& c) {
    if (!std::isnan(v)) {
      acc += v;
      ++c;
    }
  };
  for (const EvalRow& r : rows) {
    if (r.classifier != classifier) continue;
    m.n += r.n;
    add(r.recall, m.recall, counts[0]);
    add(r.auc, m.auc, counts[1]);
    add(r.fn_rate, m.fn_rate, counts[2]);
    add(r.fp_rate, m.fp_rate, counts[3]);
  }
  auto fin = [](double& v, std::size_t c) { v = c ? v / static_cast<double>(c) : NAN; };
  fin(m.recall, counts[0]);
  fin(m.auc, counts[1]);
  fin(m.fn_rate, counts[2]);
  fin(m.fp_rate, counts[3]);
  return m;
}

/// k-fold cross validation split by student: one row per fold and
/// classifier, then mean rows. Folds whose training or test part has a
/// single class are skipped and listed.
inline EvalReport cross_validate(const std::vector<Example>& data, const ModelConfig& config,
                                 const ThresholdTable& t75, std::size_t k = 3, std::uint64_t seed = 1) {
  EvalReport report;
  auto fold = student_folds(data, k, seed);
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<Example> train, test;
    for (const Example& e : data) (fold[e.student] == f ? test : train).push_back(e);
    const std::string name = "fold" + std::to_string(f + 1);
    auto single = [](const std::vector<Example>& v) {
      bool a = false, b = false;
      for (const Example& e : v) (e.label ? a : b) = true;
      return !(a && b);
    };
    if (single(train) || single(test)) {
      report.skipped.push_back(name);
      continue;
    }
    HelpNeedModel m = HelpNeedModel::train(train, config, t75);
    for (EvalRow& r : evaluate_model(m, test, name)) report.rows.push_back(r);
  }
  std::vector<EvalRow> means;
  for (const char* c : {"all", "state_based", "state_free"}) means.push_back(mean_row(report.rows, "mean", c));
  for (EvalRow& r : means) report.rows.push_back(r);
  return report;
}

/// Train on one set of students, test on another.
inline EvalReport holdout(const std::vector<Example>& train, const std::vector<Example>& test,
                          const ModelConfig& config, const ThresholdTable& t75) {
  EvalReport report;
  HelpNeedModel m = HelpNeedModel::train(train, config, t75);
  report.rows = evaluate_model(m, test, "holdout");
  return report;
}

/// Splits examples by student: about `test_share` of students go to test.
inline std::pair<std::vector<Example>, std::vector<Example>> split_by_student(const std::vector<Example>& data,
                                                                              double test_share, std::uint64_t seed) {
  std::vector<Example> train, test;
  std::set<std::string> ids;
  for (const Example& e : data) ids.insert(e.student);
  std::vector<std::string> order(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_share * static_cast<double>(order.size())));
  std::set<std::string> test_ids(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  for (const Example& e : data) (test_ids.count(e.student) ? test : train).push_back(e);
  return {train, test};
}

}  // namespace hnu
