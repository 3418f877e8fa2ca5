#pragma once

// Next-step hints from the interaction network, with proof search as the
// fallback, and bookkeeping for which hints were justified.

#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "hnu/network.hpp"
#include "hnu/search.hpp"

namespace hnu {

enum class HintSource : std::uint8_t { kNetwork, kSearchFallback };
enum class Agency : std::uint8_t { kProactive, kOnDemand };

inline std::string_view hint_source_name(HintSource s) { return s == HintSource::kNetwork ? "network" : "search_fallback"; }
inline std::string_view agency_name(Agency a) { return a == Agency::kProactive ? "proactive" : "on_demand"; }

struct Hint {
  Expr statement;
  HintSource source = HintSource::kNetwork;
  Agency agency = Agency::kOnDemand;
  bool justified = false;
  std::size_t issued_at = 0;  // step index within the attempt
  std::uint64_t seq = 0;      // seq of the logged hint event
};

class HintError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest proofs from a state, as statement lists, cached per (problem,
/// unordered state). Up to kProofsPerState proofs are kept. A failed search
/// is only trusted for bounds no larger than the one it ran with.
/// Thread-safe.
class ProofCache {
 public:
  using Path = std::vector<Expr>;
  static constexpr std::size_t kProofsPerState = 16;

  /// One shortest proof within `max_depth`, if any.
  std::optional<Path> get(const ProofState& state, const Problem& problem, std::size_t max_depth) {
    const std::vector<Path>* paths = lookup(state, problem, max_depth);
    if (!paths || paths->empty()) return std::nullopt;
    return paths->front();
  }

  /// Keys of the statements that appear in the cached shortest proofs. Each
  /// of them shortens the remaining proof by one step once derived.
  std::set<std::string> optimal_moves(const ProofState& state, const Problem& problem, std::size_t max_depth) {
    std::set<std::string> out;
    if (const std::vector<Path>* paths = lookup(state, problem, max_depth))
      for (const Path& p : *paths)
        for (const Expr& e : p) out.insert(e.key());
    return out;
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return cache_.size();
  }

 private:
  struct Entry {
    std::vector<Path> paths;
    std::size_t depth = 0;
  };

  const std::vector<Path>* lookup(const ProofState& state, const Problem& problem, std::size_t max_depth) {
    const std::string key = problem.id + "#" + canonical_state(state, KeyMode::kUnordered);
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = cache_.find(key);
      if (it != cache_.end()) {
        const Entry& e = it->second;
        if (!e.paths.empty()) return e.paths.front().size() <= max_depth ? &e.paths : nullptr;
        if (e.depth >= max_depth) return nullptr;
      }
    }
    SearchOptions opts;
    opts.max_depth = max_depth;
    Entry entry{{}, max_depth};
    for (const Proof& proof : shortest_proofs_from(state, problem, opts, kProofsPerState)) {
      Path path;
      for (const ProofStep& s : proof.steps) path.push_back(s.derived);
      entry.paths.push_back(std::move(path));
    }
    std::lock_guard<std::mutex> lock(mu_);
    // References into an unordered_map stay valid across rehashing.
    return &cache_.insert_or_assign(key, std::move(entry)).first->second.paths;
  }

  mutable std::mutex mu_;
  std::unordered_map<std::string, Entry> cache_;
};

/// The statement to hint from `state`. Network hints pick, among observed
/// derivations that lie on a shortest remaining proof and lead to successors
/// from which a goal is reachable, the one with the highest value; ties go
/// to the lexicographically smallest statement. Otherwise the first step of
/// a shortest proof is hinted.
inline Hint next_step_hint(const InteractionNetwork* net, const ProofState& state, const Problem& problem,
                           ProofCache* cache = nullptr) {
  if (state.is_goal(problem)) throw HintError("problem already solved");
  const std::size_t depth = problem.optimal_length + 3;
  ProofCache local;
  ProofCache& proofs = cache ? *cache : local;
  if (net) {
    if (auto node = net->find(canonical_state(state, net->key_mode()))) {
      const auto& reachable = net->goal_reachable();
      std::optional<std::set<std::string>> optimal;
      std::optional<Expr> best;
      double best_v = 0;
      std::string best_text;
      for (const Edge& e : net->out_edges(*node)) {
        if (e.kind != StepKind::kDerive || !reachable[e.to]) continue;
        Expr stmt;
        try {
          stmt = parse_expression(e.statement);
        } catch (const ParseError&) {
          continue;
        }
        if (state.contains(stmt) || !find_justification(state, problem, stmt)) continue;
        if (!optimal) optimal = proofs.optimal_moves(state, problem, depth);
        if (!optimal->count(stmt.key())) continue;
        const double v = net->node(e.to).value;
        const std::string text = stmt.str();
        if (!best || v > best_v || (v == best_v && text < best_text)) {
          best = stmt;
          best_v = v;
          best_text = text;
        }
      }
      if (best) return Hint{*best, HintSource::kNetwork};
    }
  }
  auto path = proofs.get(state, problem, depth);
  if (!path || path->empty()) throw HintError("no proof within " + std::to_string(depth) + " steps");
  return Hint{path->front(), HintSource::kSearchFallback};
}

/// Hints issued during one attempt.
class HintLedger {
 public:
  /// Records an issued hint. A new proactive hint retires any unjustified
  /// proactive hint still pending.
  Hint& issue(Hint h) {
    if (h.agency == Agency::kProactive)
      for (std::size_t i : pending_)
        if (hints_[i].agency == Agency::kProactive) retired_.push_back(i);
    std::erase_if(pending_, [&](std::size_t i) {
      return std::find(retired_.begin(), retired_.end(), i) != retired_.end();
    });
    hints_.push_back(std::move(h));
    pending_.push_back(hints_.size() - 1);
    return hints_.back();
  }

  /// Marks the most recent pending hint for `derived` as justified and
  /// returns it, or nullptr when no pending hint matches.
  const Hint* record_justification(const Expr& derived) {
    for (auto it = pending_.rbegin(); it != pending_.rend(); ++it) {
      Hint& h = hints_[*it];
      if (equivalent(h.statement, derived)) {
        h.justified = true;
        pending_.erase(std::next(it).base());
        return &h;
      }
    }
    return nullptr;
  }

  /// Most recent unjustified hint still open, if any.
  const Hint* latest_pending() const { return pending_.empty() ? nullptr : &hints_[pending_.back()]; }

  /// Drops pending hints whose statement is already in the state.
  void discard_satisfied(const ProofState& state) {
    std::erase_if(pending_, [&](std::size_t i) { return state.contains(hints_[i].statement); });
  }

  const std::vector<Hint>& hints() const { return hints_; }

 private:
  std::vector<Hint> hints_;
  std::vector<std::size_t> pending_;
  std::vector<std::size_t> retired_;
};

}  // namespace hnu
