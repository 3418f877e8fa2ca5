#pragma once

// Trace events, their line-delimited JSON form, validation, and replay of
// an attempt's events into state-transition steps.

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "hnu/proof.hpp"

namespace hnu {

enum class EventKind : std::uint8_t { kDerive, kDelete, kHintRequest, kProactiveHint, kHintJustified, kProblemComplete };

inline std::string_view event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::kDerive: return "derive";
    case EventKind::kDelete: return "delete";
    case EventKind::kHintRequest: return "hint_request";
    case EventKind::kProactiveHint: return "proactive_hint";
    case EventKind::kHintJustified: return "hint_justified";
    case EventKind::kProblemComplete: return "problem_complete";
  }
  return "";
}

inline std::optional<EventKind> parse_event_kind(std::string_view s) {
  for (EventKind k : {EventKind::kDerive, EventKind::kDelete, EventKind::kHintRequest, EventKind::kProactiveHint,
                      EventKind::kHintJustified, EventKind::kProblemComplete})
    if (event_kind_name(k) == s) return k;
  return std::nullopt;
}

inline bool is_hint_event(EventKind k) { return k == EventKind::kHintRequest || k == EventKind::kProactiveHint; }

enum class Classifier : std::uint8_t { kStateBased, kStateFree };

inline std::string_view classifier_name(Classifier c) {
  return c == Classifier::kStateBased ? "state_based" : "state_free";
}

inline std::optional<Classifier> parse_classifier(std::string_view s) {
  if (s == "state_based") return Classifier::kStateBased;
  if (s == "state_free") return Classifier::kStateFree;
  return std::nullopt;
}

/// The predictor's output for the step it was made before. `shadow` marks
/// predictions logged without being acted on.
struct PredictionRecord {
  double score = 0;
  Classifier classifier = Classifier::kStateFree;
  bool helpneed = false;
  bool shadow = false;

  friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

/// One logged action. Which payload fields are set depends on `kind`:
/// derive carries rule, premises, statement and correct; delete carries
/// index and statement; hint events carry the hinted statement and its
/// source; hint_justified carries the statement and the hint's seq.
struct TraceEvent {
  std::string student;
  std::string problem;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::kDerive;
  double action_time = 0;

  std::optional<RuleId> rule;
  std::vector<std::size_t> premises;
  std::optional<std::size_t> index;
  std::string statement;
  std::optional<bool> correct;
  std::string source;
  std::optional<std::uint64_t> hint_seq;
  std::optional<PredictionRecord> prediction;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

class TraceError : public std::runtime_error {
 public:
  TraceError(const std::string& what, std::size_t line = 0, std::optional<std::uint64_t> seq = std::nullopt)
      : std::runtime_error(what), line_(line), seq_(seq) {}
  std::size_t line() const { return line_; }
  std::optional<std::uint64_t> seq() const { return seq_; }

 private:
  std::size_t line_;
  std::optional<std::uint64_t> seq_;
};

inline nlohmann::json prediction_to_json(const PredictionRecord& p) {
  return {{"score", p.score},
          {"classifier", std::string(classifier_name(p.classifier))},
          {"helpneed", p.helpneed},
          {"shadow", p.shadow}};
}

inline PredictionRecord prediction_from_json(const nlohmann::json& j) {
  PredictionRecord p;
  p.score = j.at("score").get<double>();
  auto c = parse_classifier(j.at("classifier").get<std::string>());
  if (!c) throw TraceError("unknown classifier '" + j.at("classifier").get<std::string>() + "'");
  p.classifier = *c;
  p.helpneed = j.at("helpneed").get<bool>();
  p.shadow = j.value("shadow", false);
  return p;
}

inline nlohmann::json event_to_json(const TraceEvent& e) {
  nlohmann::json j;
  j["student"] = e.student;
  j["problem"] = e.problem;
  j["seq"] = e.seq;
  j["kind"] = std::string(event_kind_name(e.kind));
  j["action_time"] = e.action_time;
  if (e.rule) j["rule"] = std::string(rule_info(*e.rule).abbrev);
  if (e.kind == EventKind::kDerive) j["premises"] = e.premises;
  if (e.index) j["index"] = *e.index;
  if (!e.statement.empty()) j["statement"] = e.statement;
  if (e.correct) j["correct"] = *e.correct;
  if (!e.source.empty()) j["source"] = e.source;
  if (e.hint_seq) j["hint_seq"] = *e.hint_seq;
  if (e.prediction) j["prediction"] = prediction_to_json(*e.prediction);
  return j;
}

/// Field-level checks that need no other events.
inline void validate_event(const TraceEvent& e) {
  auto fail = [&](const std::string& msg) { throw TraceError(msg, 0, e.seq); };
  if (e.student.empty()) fail("missing student");
  if (e.problem.empty()) fail("missing problem");
  if (!(e.action_time >= 0)) fail("negative action_time");
  switch (e.kind) {
    case EventKind::kDerive:
      if (!e.correct) fail("derive event without correctness flag");
      if (!e.rule) fail("derive event without rule");
      if (e.statement.empty()) fail("derive event without statement");
      break;
    case EventKind::kDelete:
      if (!e.index) fail("delete event without index");
      break;
    case EventKind::kHintRequest:
    case EventKind::kProactiveHint:
      if (e.statement.empty()) fail("hint event without hinted statement");
      break;
    case EventKind::kHintJustified:
      if (!e.hint_seq) fail("hint_justified without hint reference");
      break;
    case EventKind::kProblemComplete: break;
  }
}

inline TraceEvent event_from_json(const nlohmann::json& j) {
  TraceEvent e;
  try {
    e.student = j.at("student").get<std::string>();
    e.problem = j.at("problem").get<std::string>();
    e.seq = j.at("seq").get<std::uint64_t>();
    auto kind = parse_event_kind(j.at("kind").get<std::string>());
    if (!kind) throw TraceError("unknown event kind '" + j.at("kind").get<std::string>() + "'");
    e.kind = *kind;
    e.action_time = j.at("action_time").get<double>();
    if (j.contains("rule")) {
      auto r = parse_rule(j["rule"].get<std::string>());
      if (!r) throw TraceError("unknown rule '" + j["rule"].get<std::string>() + "'");
      e.rule = *r;
    }
    if (j.contains("premises")) e.premises = j["premises"].get<std::vector<std::size_t>>();
    if (j.contains("index")) e.index = j["index"].get<std::size_t>();
    if (j.contains("statement")) e.statement = j["statement"].get<std::string>();
    if (j.contains("correct")) e.correct = j["correct"].get<bool>();
    if (j.contains("source")) e.source = j["source"].get<std::string>();
    if (j.contains("hint_seq")) e.hint_seq = j["hint_seq"].get<std::uint64_t>();
    if (j.contains("prediction")) e.prediction = prediction_from_json(j["prediction"]);
  } catch (const nlohmann::json::exception& ex) {
    throw TraceError(std::string("schema violation: ") + ex.what());
  }
  validate_event(e);
  return e;
}

/// Cross-event checks: seq strictly increasing per (student, problem) and
/// every hint_justified pointing at an earlier hint event of that attempt.
inline void validate_events(const std::vector<TraceEvent>& events) {
  std::map<std::pair<std::string, std::string>, std::uint64_t> last_seq;
  std::map<std::pair<std::string, std::string>, std::vector<std::uint64_t>> hints;
  for (const TraceEvent& e : events) {
    validate_event(e);
    auto key = std::make_pair(e.student, e.problem);
    auto it = last_seq.find(key);
    if (it != last_seq.end() && e.seq <= it->second) throw TraceError("non-monotone seq", 0, e.seq);
    last_seq[key] = e.seq;
    if (is_hint_event(e.kind)) hints[key].push_back(e.seq);
    if (e.kind == EventKind::kHintJustified) {
      const auto& h = hints[key];
      if (std::find(h.begin(), h.end(), *e.hint_seq) == h.end())
        throw TraceError("hint_justified without prior hint", 0, e.seq);
    }
  }
}

inline std::vector<TraceEvent> parse_traces(std::istream& in) {
  std::vector<TraceEvent> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(event_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& ex) {
      throw TraceError("line " + std::to_string(lineno) + ": " + ex.what(), lineno);
    } catch (const TraceError& ex) {
      throw TraceError("line " + std::to_string(lineno) + ": " + ex.what(), lineno, ex.seq());
    }
  }
  try {
    validate_events(out);
  } catch (const TraceError& ex) {
    std::size_t lineno_of = 0;
    for (std::size_t i = 0; i < out.size(); ++i)
      if (ex.seq() && out[i].seq == *ex.seq()) lineno_of = i + 1;
    throw TraceError(ex.what(), lineno_of, ex.seq());
  }
  return out;
}

inline std::vector<TraceEvent> load_traces(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TraceError("cannot open " + path);
  return parse_traces(in);
}

inline void write_event(std::ostream& out, const TraceEvent& e) { out << event_to_json(e).dump() << '\n'; }

inline void write_traces(const std::vector<TraceEvent>& events, std::ostream& out) {
  for (const TraceEvent& e : events) write_event(out, e);
}

inline void write_traces(const std::vector<TraceEvent>& events, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw TraceError("cannot write " + path);
  write_traces(events, out);
}

enum class StepKind : std::uint8_t { kDerive, kDelete };

/// One realized state transition with everything that happened since the
/// previous one.
struct StepRecord {
  std::string student;
  std::string problem;
  std::size_t index = 0;  // position within the attempt
  StepKind kind = StepKind::kDerive;
  StateKey pre_ordered, pre_unordered, post_ordered, post_unordered;
  bool post_goal = false;
  std::string statement;  // derived or deleted statement
  std::optional<RuleId> rule;
  double duration = 0;
  bool correct = true;
  std::size_t incorrect_attempts = 0;
  bool hint_used = false;
  std::size_t hints_requested = 0;
  std::size_t hints_proactive = 0;
  std::optional<PredictionRecord> prediction;

  bool hint_received() const { return hints_requested + hints_proactive > 0; }
  const StateKey& pre_key(KeyMode m) const { return m == KeyMode::kOrdered ? pre_ordered : pre_unordered; }
  const StateKey& post_key(KeyMode m) const { return m == KeyMode::kOrdered ? post_ordered : post_unordered; }
};

/// Replays one attempt (events of a single student on a single problem, in
/// seq order) into steps, one event at a time.
///
/// Incorrect derivations, hint requests and proactive hints accrue to the
/// next realized step; hint_justified and problem_complete accrue to the
/// step they follow. Events after the last step accrue to it on finish().
class StepReplayer {
 public:
  explicit StepReplayer(const Problem& problem) : problem_(problem), state_(ProofState::start(problem)) {}

  const ProofState& state() const { return state_; }
  const std::vector<StepRecord>& steps() const { return steps_; }

  void feed(const TraceEvent& e) {
    if (e.problem != problem_.id) fail(e, "event belongs to problem " + e.problem);
    switch (e.kind) {
      case EventKind::kDerive: {
        Expr derived;
        try {
          derived = parse_expression(e.statement);
        } catch (const ParseError& ex) {
          fail(e, ex.what());
        }
        if (!*e.correct) {
          try {
            if (check_step(state_, *e.rule, e.premises, derived) == StepCheck::kCorrect)
              fail(e, "derivation logged as incorrect is correct");
          } catch (const std::out_of_range&) {
            // An out-of-range selection is simply an incorrect attempt.
          }
          pending_.duration += e.action_time;
          pending_.incorrect_attempts += 1;
          have_pending_ = true;
          break;
        }
        StepRecord s = begin_step(e);
        DeriveOutcome outcome{};
        try {
          outcome = state_.derive(*e.rule, e.premises, derived);
        } catch (const std::out_of_range& ex) {
          fail(e, ex.what());
        }
        if (outcome == DeriveOutcome::kIncorrect) fail(e, "derivation logged as correct is incorrect");
        if (outcome == DeriveOutcome::kDuplicate) fail(e, "statement already present");
        s.kind = StepKind::kDerive;
        s.statement = derived.str();
        s.rule = e.rule;
        finish_step(std::move(s));
        break;
      }
      case EventKind::kDelete: {
        if (*e.index >= state_.size()) fail(e, "delete index out of range");
        if (*e.index < state_.num_premises()) fail(e, "premises cannot be deleted");
        const Expr target = state_.statements()[*e.index];
        if (!e.statement.empty()) {
          Expr named;
          try {
            named = parse_expression(e.statement);
          } catch (const ParseError& ex) {
            fail(e, ex.what());
          }
          if (!equivalent(named, target)) fail(e, "deleted statement does not match index");
        }
        StepRecord s = begin_step(e);
        state_.remove(*e.index);
        s.kind = StepKind::kDelete;
        s.statement = target.str();
        finish_step(std::move(s));
        break;
      }
      case EventKind::kHintRequest:
      case EventKind::kProactiveHint:
        hint_statements_[e.seq] = e.statement;
        pending_.duration += e.action_time;
        (e.kind == EventKind::kHintRequest ? pending_.hints_requested : pending_.hints_proactive) += 1;
        have_pending_ = true;
        break;
      case EventKind::kHintJustified: {
        auto it = hint_statements_.find(*e.hint_seq);
        if (it == hint_statements_.end()) fail(e, "hint_justified without prior hint");
        if (steps_.empty() || steps_.back().kind != StepKind::kDerive) fail(e, "hint_justified without a derivation");
        if (!equivalent(parse_expression(it->second), parse_expression(steps_.back().statement)))
          fail(e, "justified statement does not match the hint");
        steps_.back().hint_used = true;
        steps_.back().duration += e.action_time;
        break;
      }
      case EventKind::kProblemComplete:
        if (steps_.empty()) {
          pending_.duration += e.action_time;
          have_pending_ = true;
        } else {
          steps_.back().duration += e.action_time;
        }
        break;
    }
  }

  std::vector<StepRecord> finish() {
    if (have_pending_ && !steps_.empty()) {
      StepRecord& last = steps_.back();
      last.duration += pending_.duration;
      last.incorrect_attempts += pending_.incorrect_attempts;
      last.hints_requested += pending_.hints_requested;
      last.hints_proactive += pending_.hints_proactive;
      pending_ = StepRecord{};
      have_pending_ = false;
    }
    return steps_;
  }

 private:
  [[noreturn]] static void fail(const TraceEvent& e, const std::string& msg) {
    throw TraceError("replay failed at seq " + std::to_string(e.seq) + ": " + msg, 0, e.seq);
  }

  StepRecord begin_step(const TraceEvent& e) {
    StepRecord s = pending_;
    pending_ = StepRecord{};
    have_pending_ = false;
    s.student = e.student;
    s.problem = e.problem;
    s.index = steps_.size();
    s.duration += e.action_time;
    s.pre_ordered = canonical_state(state_, KeyMode::kOrdered);
    s.pre_unordered = canonical_state(state_, KeyMode::kUnordered);
    s.prediction = e.prediction;
    return s;
  }

  void finish_step(StepRecord s) {
    s.post_ordered = canonical_state(state_, KeyMode::kOrdered);
    s.post_unordered = canonical_state(state_, KeyMode::kUnordered);
    s.post_goal = state_.is_goal(problem_);
    steps_.push_back(std::move(s));
  }

  const Problem& problem_;
  ProofState state_;
  std::vector<StepRecord> steps_;
  StepRecord pending_;
  bool have_pending_ = false;
  std::map<std::uint64_t, std::string> hint_statements_;
};

inline std::vector<StepRecord> events_to_steps(const std::vector<TraceEvent>& events, const Problem& problem) {
  StepReplayer r(problem);
  for (const TraceEvent& e : events) r.feed(e);
  return r.finish();
}

/// Events grouped per (student, problem) in first-appearance order.
struct Attempt {
  std::string student;
  std::string problem;
  std::vector<TraceEvent> events;
};

inline std::vector<Attempt> group_attempts(const std::vector<TraceEvent>& events) {
  std::vector<Attempt> out;
  std::map<std::pair<std::string, std::string>, std::size_t> where;
  for (const TraceEvent& e : events) {
    auto key = std::make_pair(e.student, e.problem);
    auto [it, inserted] = where.emplace(key, out.size());
    if (inserted) out.push_back(Attempt{e.student, e.problem, {}});
    out[it->second].events.push_back(e);
  }
  return out;
}

}  // namespace hnu
