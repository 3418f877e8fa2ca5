#pragma once

// Interaction networks: per-problem graphs of observed proof states, the
// value iteration over them, and 0-100 state quality.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "hnu/trace.hpp"

namespace hnu {

enum class Backup : std::uint8_t { kExpected, kMax };

struct ValueIterationParams {
  double goal_reward = 100;
  double deadend_penalty = -100;
  double step_reward = -1;
  double gamma = 0.9;
  double epsilon = 1e-6;
  std::size_t max_iterations = 1000;
  Backup backup = Backup::kExpected;

  void validate() const {
    if (!(gamma > 0 && gamma < 1)) throw std::invalid_argument("gamma must lie in (0, 1)");
    if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
  }
};

struct NodeStats {
  StateKey key;
  std::size_t visits = 0;
  double value = 0;
  double global_quality = 0;
  double local_quality = 0;
  bool is_goal = false;
  bool is_deadend = false;
};

struct Edge {
  std::size_t to = 0;
  std::size_t count = 0;
  StepKind kind = StepKind::kDerive;
  std::string statement;
};

struct IterationReport {
  std::size_t iterations = 0;
  double residual = 0;
  bool converged = true;
  std::vector<double> residuals;
};

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InteractionNetwork {
 public:
  InteractionNetwork() = default;
  InteractionNetwork(std::string problem_id, KeyMode mode) : problem_id_(std::move(problem_id)), mode_(mode) {}

  const std::string& problem_id() const { return problem_id_; }
  KeyMode key_mode() const { return mode_; }
  const StateKey& start_key() const { return start_key_; }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<NodeStats>& nodes() const { return nodes_; }
  const NodeStats& node(std::size_t i) const { return nodes_.at(i); }
  const std::vector<Edge>& out_edges(std::size_t i) const { return out_.at(i); }
  const std::vector<std::size_t>& predecessors(std::size_t i) const { return in_.at(i); }
  const IterationReport& last_iteration() const { return report_; }
  const ValueIterationParams& params() const { return params_; }

  std::optional<std::size_t> find(const StateKey& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const NodeStats* lookup(const StateKey& key) const {
    auto i = find(key);
    return i ? &nodes_[*i] : nullptr;
  }

  std::size_t edge_count(const StateKey& from, const StateKey& to) const {
    auto a = find(from), b = find(to);
    if (!a || !b) return 0;
    for (const Edge& e : out_[*a])
      if (e.to == *b) return e.count;
    return 0;
  }

  /// Empirical P(to | from); 0 when either state is unknown.
  double probability(const StateKey& from, const StateKey& to) const {
    auto a = find(from);
    if (!a) return 0;
    std::size_t total = 0;
    for (const Edge& e : out_[*a]) total += e.count;
    return total ? static_cast<double>(edge_count(from, to)) / static_cast<double>(total) : 0;
  }

  std::size_t add_node(const StateKey& key, bool is_goal) {
    auto [it, inserted] = index_.emplace(key, nodes_.size());
    if (inserted) {
      NodeStats n;
      n.key = key;
      n.is_goal = is_goal;
      nodes_.push_back(std::move(n));
      out_.emplace_back();
      in_.emplace_back();
    } else if (is_goal) {
      nodes_[it->second].is_goal = true;
    }
    return it->second;
  }

  void add_visit(std::size_t node) { nodes_[node].visits += 1; }

  void add_transition(std::size_t from, std::size_t to, StepKind kind, const std::string& statement) {
    for (Edge& e : out_[from])
      if (e.to == to) {
        e.count += 1;
        return;
      }
    out_[from].push_back(Edge{to, 1, kind, statement});
    if (std::find(in_[to].begin(), in_[to].end(), from) == in_[to].end()) in_[to].push_back(from);
  }

  void set_start(const StateKey& key) { start_key_ = key; }

  /// Marks goal-free leaves as deadends. Goal nodes are terminal.
  void classify_terminals() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) nodes_[i].is_deadend = !nodes_[i].is_goal && out_[i].empty();
    reachable_.assign(nodes_.size(), false);
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].is_goal) {
        reachable_[i] = true;
        stack.push_back(i);
      }
    while (!stack.empty()) {
      std::size_t cur = stack.back();
      stack.pop_back();
      for (std::size_t p : in_[cur])
        if (!reachable_[p]) {
          reachable_[p] = true;
          stack.push_back(p);
        }
    }
  }

  bool is_terminal(std::size_t i) const { return nodes_[i].is_goal || nodes_[i].is_deadend; }

  /// Bellman backup over the empirical transitions until the largest value
  /// change falls below epsilon. Values stay usable when the iteration cap
  /// is hit; the report says so.
  const IterationReport& value_iterate(const ValueIterationParams& params = {}) {
    params.validate();
    params_ = params;
    classify_terminals();
    const std::size_t n = nodes_.size();
    std::vector<double> v(n, 0.0);
    std::vector<double> totals(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (nodes_[i].is_goal) v[i] = params.goal_reward;
      else if (nodes_[i].is_deadend) v[i] = params.deadend_penalty;
      for (const Edge& e : out_[i]) totals[i] += static_cast<double>(e.count);
    }
    report_ = IterationReport{};
    bool any_free = false;
    for (std::size_t i = 0; i < n; ++i) any_free = any_free || !is_terminal(i);
    if (any_free) {
      report_.converged = false;
      std::vector<double> next = v;
      while (report_.iterations < params.max_iterations) {
        double residual = 0;
        for (std::size_t i = 0; i < n; ++i) {
          if (is_terminal(i)) continue;
          double backup = 0;
          if (params.backup == Backup::kExpected) {
            for (const Edge& e : out_[i]) backup += static_cast<double>(e.count) / totals[i] * v[e.to];
          } else {
            backup = -INFINITY;
            for (const Edge& e : out_[i]) backup = std::max(backup, v[e.to]);
          }
          next[i] = params.step_reward + params.gamma * backup;
          residual = std::max(residual, std::abs(next[i] - v[i]));
        }
        v.swap(next);
        report_.iterations += 1;
        report_.residual = residual;
        report_.residuals.push_back(residual);
        if (residual < params.epsilon) {
          report_.converged = true;
          break;
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) nodes_[i].value = v[i];
    compute_quality();
    return report_;
  }

  /// Whether some goal can be reached from each node.
  const std::vector<bool>& goal_reachable() const { return reachable_; }

  nlohmann::json to_json() const;
  static InteractionNetwork from_json(const nlohmann::json& j);

 private:
  void compute_quality() {
    if (nodes_.empty()) return;
    auto scale = [](double v, double lo, double hi) { return hi > lo ? (v - lo) / (hi - lo) * 100.0 : 100.0; };
    double lo = INFINITY, hi = -INFINITY;
    for (const NodeStats& s : nodes_) {
      lo = std::min(lo, s.value);
      hi = std::max(hi, s.value);
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      nodes_[i].global_quality = scale(nodes_[i].value, lo, hi);
      double llo = nodes_[i].value, lhi = nodes_[i].value;
      for (std::size_t p : in_[i])
        for (const Edge& e : out_[p]) {
          llo = std::min(llo, nodes_[e.to].value);
          lhi = std::max(lhi, nodes_[e.to].value);
        }
      nodes_[i].local_quality = scale(nodes_[i].value, llo, lhi);
    }
  }

  std::string problem_id_;
  KeyMode mode_ = KeyMode::kUnordered;
  StateKey start_key_;
  std::vector<NodeStats> nodes_;
  std::vector<std::vector<Edge>> out_;
  std::vector<std::vector<std::size_t>> in_;
  std::unordered_map<StateKey, std::size_t> index_;
  std::vector<bool> reachable_;
  ValueIterationParams params_;
  IterationReport report_;
};

/// Counts states and transitions over all attempts at `problem`. Each
/// attempt visits the start state once and every post-state once.
inline InteractionNetwork build_network(const std::vector<std::vector<StepRecord>>& attempts, const Problem& problem,
                                        KeyMode mode) {
  InteractionNetwork net(problem.id, mode);
  ProofState start = ProofState::start(problem);
  const StateKey start_key = canonical_state(start, mode);
  net.set_start(start_key);
  std::size_t used = 0;
  for (const auto& steps : attempts) {
    if (steps.empty()) continue;
    if (steps.front().problem != problem.id) throw NetworkError("step from problem " + steps.front().problem);
    ++used;
    net.add_visit(net.add_node(start_key, start.is_goal(problem)));
    for (const StepRecord& s : steps) {
      std::size_t from = net.add_node(s.pre_key(mode), false);
      std::size_t to = net.add_node(s.post_key(mode), s.post_goal);
      net.add_visit(to);
      net.add_transition(from, to, s.kind, s.statement);
    }
  }
  if (used == 0) throw NetworkError("empty corpus for problem " + problem.id);
  net.classify_terminals();
  return net;
}

inline nlohmann::json InteractionNetwork::to_json() const {
  nlohmann::json j;
  j["version"] = 1;
  j["problem"] = problem_id_;
  j["key_mode"] = std::string(key_mode_name(mode_));
  j["start"] = start_key_;
  j["params"] = {{"goal_reward", params_.goal_reward},   {"deadend_penalty", params_.deadend_penalty},
                 {"step_reward", params_.step_reward},   {"gamma", params_.gamma},
                 {"epsilon", params_.epsilon},           {"max_iterations", params_.max_iterations},
                 {"backup", params_.backup == Backup::kExpected ? "expected" : "max"}};
  j["iterations"] = report_.iterations;
  j["residual"] = report_.residual;
  j["converged"] = report_.converged;
  nlohmann::json nodes = nlohmann::json::array();
  for (const NodeStats& s : nodes_)
    nodes.push_back({{"key", s.key},
                     {"visits", s.visits},
                     {"value", s.value},
                     {"global", s.global_quality},
                     {"local", s.local_quality},
                     {"goal", s.is_goal},
                     {"deadend", s.is_deadend}});
  j["nodes"] = std::move(nodes);
  nlohmann::json edges = nlohmann::json::array();
  for (std::size_t i = 0; i < out_.size(); ++i)
    for (const Edge& e : out_[i])
      edges.push_back({{"from", nodes_[i].key},
                       {"to", nodes_[e.to].key},
                       {"count", e.count},
                       {"kind", e.kind == StepKind::kDerive ? "derive" : "delete"},
                       {"statement", e.statement}});
  j["edges"] = std::move(edges);
  return j;
}

inline InteractionNetwork InteractionNetwork::from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw NetworkError("unsupported network version");
    auto mode = parse_key_mode(j.at("key_mode").get<std::string>());
    if (!mode) throw NetworkError("bad key_mode");
    InteractionNetwork net(j.at("problem").get<std::string>(), *mode);
    net.start_key_ = j.at("start").get<std::string>();
    for (const auto& n : j.at("nodes")) {
      std::size_t i = net.add_node(n.at("key").get<std::string>(), n.at("goal").get<bool>());
      NodeStats& s = net.nodes_[i];
      s.visits = n.at("visits").get<std::size_t>();
      s.value = n.at("value").get<double>();
      s.global_quality = n.at("global").get<double>();
      s.local_quality = n.at("local").get<double>();
      s.is_deadend = n.at("deadend").get<bool>();
    }
    for (const auto& e : j.at("edges")) {
      auto from = net.find(e.at("from").get<std::string>());
      auto to = net.find(e.at("to").get<std::string>());
      if (!from || !to) throw NetworkError("edge references unknown node");
      net.out_[*from].push_back(Edge{*to, e.at("count").get<std::size_t>(),
                                     e.at("kind").get<std::string>() == "delete" ? StepKind::kDelete : StepKind::kDerive,
                                     e.at("statement").get<std::string>()});
      net.in_[*to].push_back(*from);
    }
    const auto& p = j.at("params");
    net.params_.goal_reward = p.at("goal_reward").get<double>();
    net.params_.deadend_penalty = p.at("deadend_penalty").get<double>();
    net.params_.step_reward = p.at("step_reward").get<double>();
    net.params_.gamma = p.at("gamma").get<double>();
    net.params_.epsilon = p.at("epsilon").get<double>();
    net.params_.max_iterations = p.at("max_iterations").get<std::size_t>();
    net.params_.backup = p.at("backup").get<std::string>() == "max" ? Backup::kMax : Backup::kExpected;
    net.report_.iterations = j.at("iterations").get<std::size_t>();
    net.report_.residual = j.at("residual").get<double>();
    net.report_.converged = j.at("converged").get<bool>();
    std::vector<bool> deadends;
    for (const NodeStats& n : net.nodes_) deadends.push_back(n.is_deadend);
    net.classify_terminals();
    for (std::size_t i = 0; i < deadends.size(); ++i) net.nodes_[i].is_deadend = deadends[i];
    return net;
  } catch (const nlohmann::json::exception& ex) {
    throw NetworkError(std::string("malformed network: ") + ex.what());
  }
}

struct Quality {
  double global = 0;
  double local = 0;
};

inline Quality quality(const InteractionNetwork& net, const StateKey& key) {
  const NodeStats* n = net.lookup(key);
  if (!n) throw NetworkError("unknown state key in network for " + net.problem_id());
  return Quality{n->global_quality, n->local_quality};
}

inline const NodeStats* match_state(const InteractionNetwork& net, const ProofState& state) {
  return net.lookup(canonical_state(state, net.key_mode()));
}

/// Networks for a set of problems under both key modes.
class NetworkLibrary {
 public:
  void add(InteractionNetwork net) {
    const std::string id = net.problem_id();
    auto& slot = net.key_mode() == KeyMode::kOrdered ? ordered_ : unordered_;
    slot.insert_or_assign(id, std::move(net));
  }

  const InteractionNetwork* get(const std::string& problem_id, KeyMode mode) const {
    const auto& slot = mode == KeyMode::kOrdered ? ordered_ : unordered_;
    auto it = slot.find(problem_id);
    return it == slot.end() ? nullptr : &it->second;
  }

  std::vector<std::string> problem_ids() const {
    std::vector<std::string> ids;
    for (const auto& [id, net] : unordered_) ids.push_back(id);
    for (const auto& [id, net] : ordered_)
      if (!unordered_.count(id)) ids.push_back(id);
    return ids;
  }

  /// Builds both key modes for every problem that has attempts in `steps`.
  static NetworkLibrary build(const std::vector<std::vector<StepRecord>>& attempts,
                              const std::vector<Problem>& problems, const ValueIterationParams& params = {}) {
    NetworkLibrary lib;
    for (const Problem& p : problems) {
      std::vector<std::vector<StepRecord>> mine;
      for (const auto& a : attempts)
        if (!a.empty() && a.front().problem == p.id) mine.push_back(a);
      if (mine.empty()) continue;
      for (KeyMode mode : {KeyMode::kOrdered, KeyMode::kUnordered}) {
        InteractionNetwork net = build_network(mine, p, mode);
        net.value_iterate(params);
        lib.add(std::move(net));
      }
    }
    return lib;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["version"] = 1;
    j["networks"] = nlohmann::json::array();
    for (const auto* slot : {&ordered_, &unordered_})
      for (const auto& [id, net] : *slot) j["networks"].push_back(net.to_json());
    return j;
  }

  static NetworkLibrary from_json(const nlohmann::json& j) {
    NetworkLibrary lib;
    for (const auto& n : j.at("networks")) lib.add(InteractionNetwork::from_json(n));
    return lib;
  }

 private:
  std::map<std::string, InteractionNetwork> ordered_;
  std::map<std::string, InteractionNetwork> unordered_;
};

}  // namespace hnu
