#pragma once

// Live tutoring sessions: a student works the pretest, training and
// posttest problems in order, with on-demand and proactive hints during
// training. Every event goes to the session's trace log, and sessions can
// be rebuilt from their logs.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "hnu/simulator.hpp"

namespace hnu {

class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

using Clock = std::function<double()>;  // seconds

inline Clock steady_clock_seconds() {
  return [] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
  };
}

struct ServiceOptions {
  std::vector<Problem> problems;  // served in order
  const HelpNeedModel* model = nullptr;
  const NetworkLibrary* networks = nullptr;
  std::optional<std::filesystem::path> log_dir;
  Clock clock = steady_clock_seconds();
  std::uint64_t seed = 1;
};

namespace detail {

inline bool is_index(const nlohmann::json& j) { return j.is_number_integer() && j.get<std::int64_t>() >= 0; }

inline nlohmann::json hint_json(const Hint& h) {
  return {{"statement", h.statement.str()},
          {"source", std::string(hint_source_name(h.source))},
          {"agency", std::string(agency_name(h.agency))},
          {"justified", h.justified},
          {"seq", h.seq}};
}

}  // namespace detail

/// One student's session. Not thread-safe by itself; the service holds a
/// lock per session.
class Session {
 public:
  Session(std::string id, std::string student, PolicyConfig policy, const ServiceOptions& opts, std::uint64_t index)
      : id_(std::move(id)),
        student_(std::move(student)),
        policy_config_(policy),
        opts_(opts),
        rng_(make_stream(opts.seed, "service", index, 2)),
        index_(index) {
    if (opts_.problems.empty()) throw ServiceError(500, "no problems loaded");
    if (policy_config_.kind == PolicyKind::kAdaptive && !opts_.model)
      throw ServiceError(422, "adaptive sessions need a trained model");
  }

  const std::string& id() const { return id_; }
  std::mutex& mutex() { return mu_; }

  /// Serves the first problem.
  nlohmann::json start() {
    enter(0, true);
    return respond();
  }

  nlohmann::json submit(const nlohmann::json& body) {
    require_open();
    if (!body.is_object()) throw ServiceError(422, "step payload must be an object");
    const std::string kind = body.value("kind", std::string("derive"));
    const ProofState& state = attempt_->replay.state();
    TraceEvent e;
    e.prediction = prediction_;
    if (kind == "delete") {
      if (!body.contains("index") || !detail::is_index(body["index"]))
        throw ServiceError(422, "delete needs a statement index");
      const auto index = body["index"].get<std::size_t>();
      if (index >= state.size()) throw ServiceError(422, "statement index out of range");
      if (index < state.num_premises()) throw ServiceError(422, "premises cannot be deleted");
      e.kind = EventKind::kDelete;
      e.index = index;
      e.statement = state.statements()[index].str();
      e.action_time = elapsed();
      log(e);
      return after_step(true, std::nullopt);
    }
    if (kind != "derive") throw ServiceError(422, "step kind must be derive or delete");
    std::optional<RuleId> rule;
    if (body.contains("rule") && body["rule"].is_string()) rule = parse_rule(body["rule"].get<std::string>());
    if (!rule) throw ServiceError(422, "unknown rule");
    if (!body.contains("premises") || !body["premises"].is_array()) throw ServiceError(422, "premises must be a list");
    std::vector<std::size_t> premises;
    for (const auto& p : body["premises"]) {
      if (!detail::is_index(p)) throw ServiceError(422, "premise indices must be non-negative integers");
      premises.push_back(p.get<std::size_t>());
      if (premises.back() >= state.size()) throw ServiceError(422, "premise index out of range");
    }
    if (!body.contains("statement") || !body["statement"].is_string()) throw ServiceError(422, "statement missing");
    Expr derived;
    try {
      derived = parse_expression(body["statement"].get<std::string>());
    } catch (const ParseError& ex) {
      throw ServiceError(422, ex.what());
    }
    const bool correct = check_step(state, *rule, premises, derived) == StepCheck::kCorrect;
    if (correct && state.contains(derived)) throw ServiceError(409, "statement is already in the proof");
    e.kind = EventKind::kDerive;
    e.rule = rule;
    e.premises = premises;
    e.statement = derived.str();
    e.correct = correct;
    e.action_time = elapsed();
    if (!correct) e.prediction.reset();
    log(e);
    if (!correct) return respond({{"correct", false}});
    std::optional<Hint> justified;
    if (const Hint* h = attempt_->ledger.record_justification(derived)) {
      justified = *h;
      TraceEvent j;
      j.kind = EventKind::kHintJustified;
      j.statement = h->statement.str();
      j.hint_seq = h->seq;
      log(j);
    }
    return after_step(true, justified);
  }

  nlohmann::json request_hint() {
    require_open();
    if (problem().section != Section::kTraining) throw ServiceError(409, "hints are only available during training");
    Hint h;
    try {
      h = on_demand_hint(opts_.networks, attempt_->replay.state(), problem(), &cache_);
    } catch (const HintError& ex) {
      throw ServiceError(500, ex.what());
    }
    TraceEvent e;
    e.kind = EventKind::kHintRequest;
    e.statement = h.statement.str();
    e.source = hint_source_name(h.source);
    e.action_time = elapsed();
    h.seq = log(e);
    return respond({{"hint", detail::hint_json(h)}});
  }

  nlohmann::json advance() {
    if (finished_) throw ServiceError(409, "all problems are done");
    if (!attempt_->replay.state().is_goal(problem())) throw ServiceError(409, "the current problem is not solved");
    close_attempt();
    if (problem_index_ + 1 >= opts_.problems.size()) {
      finished_ = true;
      write_meta();
      return respond();
    }
    enter(problem_index_ + 1, true);
    return respond();
  }

  nlohmann::json snapshot() const {
    nlohmann::json j;
    j["id"] = id_;
    j["student"] = student_;
    j["policy"] = policy_to_json(policy_config_);
    j["problem_index"] = problem_index_;
    j["problem_count"] = opts_.problems.size();
    j["finished"] = finished_;
    const Problem& p = problem();
    j["section"] = std::string(section_name(p.section));
    j["problem"] = problem_to_json(p);
    const ProofState& st = attempt_->replay.state();
    nlohmann::json lines = nlohmann::json::array();
    for (std::size_t i = 0; i < st.size(); ++i) {
      nlohmann::json line{{"index", i}, {"statement", st.statements()[i].str()}, {"premise", i < st.num_premises()}};
      if (const auto& just = st.justification(i)) {
        line["rule"] = std::string(rule_info(just->rule).abbrev);
        line["from"] = just->premises;
      }
      lines.push_back(std::move(line));
    }
    j["statements"] = std::move(lines);
    j["complete"] = st.is_goal(p);
    const Hint* pending = attempt_->ledger.latest_pending();
    j["pending_hint"] = pending ? detail::hint_json(*pending) : nlohmann::json(nullptr);
    nlohmann::json hints = nlohmann::json::array();
    for (const Hint& h : attempt_->ledger.hints()) hints.push_back(detail::hint_json(h));
    j["hints"] = std::move(hints);
    return j;
  }

  const std::vector<TraceEvent>& events() const { return log_; }

  /// Rebuilds a session from its metadata and logged events.
  static std::unique_ptr<Session> restore(const nlohmann::json& meta, const std::vector<TraceEvent>& events,
                                          const ServiceOptions& opts) {
    PolicyConfig policy = policy_from_json(meta.at("policy"), PolicyConfig{});
    auto s = std::make_unique<Session>(meta.at("id").get<std::string>(), meta.at("student").get<std::string>(),
                                       policy, opts, meta.at("index").get<std::uint64_t>());
    const auto target = meta.at("problem_index").get<std::size_t>();
    s->replaying_ = true;
    s->enter(0, false);
    for (const TraceEvent& e : events) {
      while (e.problem != s->problem().id) {
        if (s->problem_index_ + 1 >= opts.problems.size()) throw ServiceError(500, "log names an unknown problem");
        s->close_attempt();
        s->enter(s->problem_index_ + 1, false);
      }
      s->log(e);
    }
    while (s->problem_index_ < target) {
      s->close_attempt();
      s->enter(s->problem_index_ + 1, false);
    }
    s->finished_ = meta.value("finished", false);
    s->replaying_ = false;
    s->prediction_ = s->attempt_->policy ? s->attempt_->policy->predict(s->attempt_->replay.state()) : std::nullopt;
    s->last_time_ = s->opts_.clock();
    return s;
  }

 private:
  struct AttemptState {
    explicit AttemptState(const Problem& p) : replay(p) {}
    StepReplayer replay;
    HintLedger ledger;
    std::optional<AttemptPolicy> policy;
    std::vector<TraceEvent> events;
    std::size_t observed = 0;
  };

  const Problem& problem() const { return opts_.problems[problem_index_]; }

  void require_open() const {
    if (finished_) throw ServiceError(409, "all problems are done");
    if (attempt_->replay.state().is_goal(problem())) throw ServiceError(409, "the problem is already solved");
  }

  double elapsed() {
    const double now = opts_.clock();
    const double dt = std::max(0.0, now - last_time_);
    last_time_ = now;
    return dt;
  }

  void enter(std::size_t index, bool live) {
    problem_index_ = index;
    attempt_ = std::make_unique<AttemptState>(problem());
    if (problem().section == Section::kTraining)
      attempt_->policy.emplace(policy_config_, opts_.model, opts_.networks, problem(), history_);
    prediction_.reset();
    last_time_ = opts_.clock();
    if (live) {
      write_meta();
      step_start();
    }
  }

  void close_attempt() {
    if (!attempt_->policy) return;
    const auto& steps = attempt_->replay.finish();
    while (attempt_->observed < steps.size()) attempt_->policy->observe(steps[attempt_->observed++]);
    record_attempt(history_, attempt_->events, attempt_->policy->tracker());
  }

  /// Predicts for the step about to start and, if the policy says so,
  /// issues a proactive hint.
  std::optional<Hint> step_start() {
    prediction_.reset();
    AttemptState& a = *attempt_;
    if (!a.policy || a.replay.state().is_goal(problem())) return std::nullopt;
    while (a.observed < a.replay.steps().size()) a.policy->observe(a.replay.steps()[a.observed++]);
    StepDecision d = a.policy->on_step_start(a.replay.state(), rng_);
    prediction_ = d.prediction;
    if (!d.proactive) return std::nullopt;
    Hint h;
    try {
      h = proactive_hint(opts_.networks, a.replay.state(), problem(), &cache_);
    } catch (const HintError&) {
      return std::nullopt;
    }
    TraceEvent e;
    e.kind = EventKind::kProactiveHint;
    e.statement = h.statement.str();
    e.source = hint_source_name(h.source);
    h.seq = log(e);
    return a.ledger.hints().back();
  }

  nlohmann::json after_step(bool correct, const std::optional<Hint>& justified) {
    const bool complete = attempt_->replay.state().is_goal(problem());
    std::optional<Hint> proactive;
    if (complete) {
      TraceEvent done;
      done.kind = EventKind::kProblemComplete;
      log(done);
    } else {
      proactive = step_start();
    }
    nlohmann::json extra{{"correct", correct}};
    extra["justified_hint"] = justified ? detail::hint_json(*justified) : nlohmann::json(nullptr);
    extra["proactive_hint"] = proactive ? detail::hint_json(*proactive) : nlohmann::json(nullptr);
    return respond(std::move(extra));
  }

  nlohmann::json respond(nlohmann::json extra = nlohmann::json::object()) const {
    nlohmann::json j = snapshot();
    for (auto& [k, v] : extra.items()) j[k] = v;
    return j;
  }

  /// Appends an event to the attempt and the trace log. Returns its seq.
  std::uint64_t log(TraceEvent e) {
    AttemptState& a = *attempt_;
    if (!replaying_) {
      e.student = id_;
      e.problem = problem().id;
      e.seq = a.events.empty() ? 1 : a.events.back().seq + 1;
    }
    try {
      a.replay.feed(e);
    } catch (const TraceError& ex) {
      throw ServiceError(500, ex.what());
    }
    if (is_hint_event(e.kind)) {
      Hint h;
      h.statement = parse_expression(e.statement);
      h.source = e.source == "search_fallback" ? HintSource::kSearchFallback : HintSource::kNetwork;
      h.agency = e.kind == EventKind::kProactiveHint ? Agency::kProactive : Agency::kOnDemand;
      h.seq = e.seq;
      h.issued_at = a.replay.steps().size();
      a.ledger.issue(h);
    } else if (e.kind == EventKind::kHintJustified && replaying_) {
      a.ledger.record_justification(parse_expression(e.statement));
    }
    a.events.push_back(e);
    log_.push_back(e);
    if (!replaying_ && opts_.log_dir) {
      std::ofstream out(*opts_.log_dir / (id_ + ".jsonl"), std::ios::app);
      write_event(out, e);
      if (!out) throw ServiceError(500, "cannot write the trace log");
    }
    return e.seq;
  }

  void write_meta() const {
    if (replaying_ || !opts_.log_dir) return;
    nlohmann::json meta{{"id", id_},
                        {"student", student_},
                        {"index", index_},
                        {"policy", policy_to_json(policy_config_)},
                        {"problem_index", problem_index_},
                        {"finished", finished_}};
    const auto path = *opts_.log_dir / (id_ + ".json");
    const auto tmp = *opts_.log_dir / (id_ + ".json.tmp");
    {
      std::ofstream out(tmp);
      out << meta.dump() << '\n';
      if (!out) throw ServiceError(500, "cannot write session metadata");
    }
    std::filesystem::rename(tmp, path);
  }

  std::string id_;
  std::string student_;
  PolicyConfig policy_config_;
  const ServiceOptions& opts_;
  std::mt19937_64 rng_;
  std::uint64_t index_;
  std::mutex mu_;
  std::size_t problem_index_ = 0;
  bool finished_ = false;
  bool replaying_ = false;
  std::unique_ptr<AttemptState> attempt_;
  StudentHistory history_;
  std::optional<PredictionRecord> prediction_;
  double last_time_ = 0;
  std::vector<TraceEvent> log_;
  ProofCache cache_;
};

/// All sessions. Shared artifacts are read-only after construction.
class TutorService {
 public:
  explicit TutorService(ServiceOptions opts) : opts_(std::move(opts)) {
    if (opts_.problems.empty()) throw ServiceError(500, "no problems loaded");
    if (opts_.log_dir) std::filesystem::create_directories(*opts_.log_dir);
  }

 private:
  template <class F>
  auto with(const std::string& id, F&& f) {
    Session* s = nullptr;
    {
      std::shared_lock lock(mu_);
      auto it = sessions_.find(id);
      if (it == sessions_.end()) throw ServiceError(404, "unknown session " + id);
      s = it->second.get();
    }
    std::lock_guard<std::mutex> guard(s->mutex());
    return f(*s);
  }

 public:

  /// Body: {"student": alias, "policy": "adaptive" | "control" | "random:p",
  /// "penalty": bool, "key_mode": "ordered" | "unordered", "cooldown": n}.
  nlohmann::json create(const nlohmann::json& body) {
    if (!body.is_object()) throw ServiceError(422, "session payload must be an object");
    PolicyConfig policy;
    try {
      policy = policy_from_json(body, PolicyConfig{});
    } catch (const std::exception& ex) {
      throw ServiceError(422, ex.what());
    }
    const std::string student = body.contains("student") && body["student"].is_string()
                                    ? body["student"].get<std::string>()
                                    : std::string("anonymous");
    std::unique_lock lock(mu_);
    const std::uint64_t index = next_index_++;
    std::ostringstream id;
    id << "s" << std::setw(5) << std::setfill('0') << index + 1;
    auto session = std::make_unique<Session>(id.str(), student, policy, opts_, index);
    nlohmann::json out = session->start();
    sessions_.emplace(id.str(), std::move(session));
    return out;
  }

  nlohmann::json get(const std::string& id) {
    return with(id, [](Session& s) { return s.snapshot(); });
  }
  nlohmann::json submit(const std::string& id, const nlohmann::json& body) {
    return with(id, [&](Session& s) { return s.submit(body); });
  }
  nlohmann::json hint(const std::string& id) {
    return with(id, [](Session& s) { return s.request_hint(); });
  }
  nlohmann::json advance(const std::string& id) {
    return with(id, [](Session& s) { return s.advance(); });
  }

  std::vector<TraceEvent> events(const std::string& id) {
    return with(id, [](Session& s) { return s.events(); });
  }

  /// Loads every session found in the log directory.
  std::size_t recover() {
    if (!opts_.log_dir) return 0;
    std::vector<std::filesystem::path> metas;
    for (const auto& entry : std::filesystem::directory_iterator(*opts_.log_dir))
      if (entry.path().extension() == ".json") metas.push_back(entry.path());
    std::sort(metas.begin(), metas.end());
    std::unique_lock lock(mu_);
    std::size_t n = 0;
    for (const auto& path : metas) {
      std::ifstream in(path);
      nlohmann::json meta = nlohmann::json::parse(in, nullptr, false);
      if (meta.is_discarded()) throw ServiceError(500, "unreadable session metadata " + path.string());
      std::vector<TraceEvent> events;
      auto log_path = path;
      log_path.replace_extension(".jsonl");
      if (std::filesystem::exists(log_path)) events = load_traces(log_path.string());
      auto s = Session::restore(meta, events, opts_);
      next_index_ = std::max(next_index_, meta.at("index").get<std::uint64_t>() + 1);
      sessions_[s->id()] = std::move(s);
      ++n;
    }
    return n;
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return sessions_.size();
  }

 private:
  ServiceOptions opts_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
  std::uint64_t next_index_ = 0;
};

}  // namespace hnu
