#pragma once

// Shortest-proof search.
//
// Derivations only ever add statements, so a proof of length D is a set of D
// derived statements that can be ordered so each follows from earlier ones.
// The search first saturates the statements reachable in fewer than D
// applications (recording every way each one can be derived), then runs an
// iterative-deepening backward search over "still needed" statement sets.
// The first depth with a solution is the minimum proof length.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hnu/proof.hpp"

namespace hnu {

struct ProofStep {
  RuleId rule;
  std::vector<std::size_t> premises;  // indices into the statement list at application time
  Expr derived;
};

struct Proof {
  std::vector<ProofStep> steps;
  std::size_t length() const { return steps.size(); }
};

struct SearchOptions {
  std::size_t max_depth = 8;
  std::size_t max_expr_size = 0;     // 0: the problem's SearchSpace bound
  std::size_t max_solutions = 1;     // >1 enumerates minimum-length proofs
};

namespace detail {

class ProofSearch {
 public:
  struct Derivation {
    RuleId rule;
    std::vector<int> premises;  // statement ids
  };
  struct Entry {
    Expr expr;
    int level = 0;
    std::vector<Derivation> derivations;
  };

  ProofSearch(const Problem& problem, std::span<const Expr> givens, const SearchOptions& opts)
      : problem_(problem), opts_(opts), space_(SearchSpace::for_problem(problem)) {
    if (opts_.max_expr_size != 0) space_.max_expr_size = opts_.max_expr_size;
    for (const Expr& g : givens) intern(g, 0);
    num_givens_ = static_cast<int>(entries_.size());
    indexed_ = 0;
  }

  std::vector<Proof> run() {
    auto goal_it = ids_.find(problem_.conclusion.key());
    if (goal_it != ids_.end() && goal_it->second < num_givens_) return {Proof{}};
    for (std::size_t depth = 1; depth <= opts_.max_depth; ++depth) {
      if (!saturate_level(static_cast<int>(depth))) break;
      goal_it = ids_.find(problem_.conclusion.key());
      if (goal_it == ids_.end()) continue;
      goal_ = goal_it->second;
      depth_ = depth;
      compute_distances();
      visited_.clear();
      std::map<int, int> chosen;
      std::set<int> needed{goal_};
      dfs(needed, chosen);
      if (!solutions_.empty()) break;
    }
    std::vector<Proof> out;
    for (const auto& sol : solutions_) out.push_back(to_proof(sol));
    return out;
  }

 private:
  int intern(const Expr& e, int level) {
    auto [it, inserted] = ids_.emplace(e.key(), static_cast<int>(entries_.size()));
    if (inserted) entries_.push_back(Entry{e, level, {}});
    return it->second;
  }

  void record(RuleId rule, std::vector<int> prem, const std::vector<Expr>& results, int level) {
    for (const Expr& r : results) {
      if (!space_.admits(rule, r)) continue;
      int id = intern(r, level);
      if (id < num_givens_) continue;
      if (std::find(prem.begin(), prem.end(), id) != prem.end()) continue;
      std::vector<int> sorted = prem;
      std::sort(sorted.begin(), sorted.end());
      auto& ds = entries_[id].derivations;
      bool dup = std::any_of(ds.begin(), ds.end(),
                             [&](const Derivation& d) { return d.rule == rule && d.premises == sorted; });
      if (!dup) ds.push_back(Derivation{rule, sorted});
    }
  }

  // Keys a statement must meet in a partner for a two-premise rule other
  // than Conjunction to apply.
  static std::vector<std::string> partner_keys(const Expr& x) {
    std::vector<std::string> k;
    if (x.op() == Op::kImplies) {
      k.push_back(x.lhs().key());
      k.push_back("!" + x.rhs().key());
    } else if (x.op() == Op::kOr) {
      k.push_back("!" + x.lhs().key());
      k.push_back("!" + x.rhs().key());
    } else if (x.op() == Op::kAnd && x.lhs().op() == Op::kImplies && x.rhs().op() == Op::kImplies) {
      k.push_back(Or(x.lhs().lhs(), x.rhs().lhs()).key());
    }
    return k;
  }

  void index_new_entries() {
    for (; indexed_ < static_cast<int>(entries_.size()); ++indexed_) {
      const Expr& e = entries_[indexed_].expr;
      for (auto& k : partner_keys(e)) wanted_by_[k].push_back(indexed_);
      if (e.op() == Op::kImplies) {
        by_antecedent_[e.lhs().key()].push_back(indexed_);
        by_consequent_[e.rhs().key()].push_back(indexed_);
      }
    }
  }

  // Adds every statement derivable with premises of level < `level` and
  // records all their derivations. Statements at level L need at least L
  // derivations, so this is all a proof of length `level` can use.
  bool saturate_level(int level) {
    index_new_entries();
    const int count = static_cast<int>(entries_.size());
    std::vector<int> frontier;
    for (int i = 0; i < count; ++i)
      if (entries_[i].level == level - 1) frontier.push_back(i);
    if (frontier.empty()) return false;
    auto usable = [&](int j) { return j < count && entries_[j].level <= level - 1; };
    std::vector<RuleId> binary;
    for (RuleId r : problem_.allowed_rules) {
      if (rule_info(r).arity == 1) {
        for (int i : frontier) {
          Expr e = entries_[i].expr;
          record(r, {i}, apply_rule(r, std::span<const Expr>(&e, 1), space_.addends), level);
        }
      } else if (r != RuleId::kConjunction) {
        binary.push_back(r);
      }
    }
    if (!binary.empty()) {
      std::set<std::pair<int, int>> tried;
      auto try_pair = [&](int i, int j) {
        if (i == j || !usable(j)) return;
        if (!tried.emplace(std::min(i, j), std::max(i, j)).second) return;
        const Expr pair[2] = {entries_[i].expr, entries_[j].expr};
        for (RuleId r : binary) record(r, {i, j}, apply_rule(r, std::span<const Expr>(pair, 2)), level);
      };
      auto each = [&](const auto& index, const std::string& key, int i) {
        auto it = index.find(key);
        if (it == index.end()) return;
        for (int j : it->second) try_pair(i, j);
      };
      for (int i : frontier) {
        const Expr x = entries_[i].expr;
        for (auto& k : partner_keys(x)) {
          auto it = ids_.find(k);
          if (it != ids_.end()) try_pair(i, it->second);
        }
        each(wanted_by_, x.key(), i);
        if (x.op() == Op::kImplies) {
          each(by_antecedent_, x.rhs().key(), i);
          each(by_consequent_, x.lhs().key(), i);
        }
      }
    }
    if (problem_.allows(RuleId::kConjunction)) {
      for (const Expr& c : space_.conjunctions) {
        std::vector<Expr> parts;
        flatten(c, parts);
        const std::size_t n = parts.size();
        if (n > 12) continue;
        for (std::size_t mask = 1; mask + 1 < (std::size_t{1} << n); ++mask) {
          if (!(mask & 1)) continue;  // each split once
          Expr a, b;
          for (std::size_t t = 0; t < n; ++t) {
            Expr& side = (mask >> t) & 1 ? a : b;
            side = side.valid() ? And(side, parts[t]) : parts[t];
          }
          auto ia = ids_.find(a.key());
          auto ib = ids_.find(b.key());
          if (ia == ids_.end() || ib == ids_.end()) continue;
          int i = ia->second, j = ib->second;
          if (!usable(i) || !usable(j)) continue;
          if (std::max(entries_[i].level, entries_[j].level) != level - 1) continue;
          const Expr pair[2] = {entries_[i].expr, entries_[j].expr};
          record(RuleId::kConjunction, {i, j}, apply_rule(RuleId::kConjunction, std::span<const Expr>(pair, 2)),
                 level);
        }
      }
    }
    for (auto& e : entries_)
      std::sort(e.derivations.begin(), e.derivations.end(), [](const Derivation& a, const Derivation& b) {
        if (a.rule != b.rule) return a.rule < b.rule;
        return a.premises < b.premises;
      });
    return true;
  }

  static void flatten(const Expr& e, std::vector<Expr>& out) {
    if (e.op() == Op::kAnd) {
      flatten(e.lhs(), out);
      flatten(e.rhs(), out);
    } else {
      out.push_back(e);
    }
  }

  // Fewest further derivations before the goal can use each statement.
  void compute_distances() {
    dist_.assign(entries_.size(), kFar);
    std::vector<int> queue{goal_};
    dist_[goal_] = 0;
    for (std::size_t q = 0; q < queue.size(); ++q) {
      int cur = queue[q];
      for (const auto& d : entries_[cur].derivations)
        for (int p : d.premises)
          if (dist_[p] == kFar) {
            dist_[p] = dist_[cur] + 1;
            queue.push_back(p);
          }
    }
  }

  bool viable(int id) const {
    return id < num_givens_ || (dist_[id] != kFar && static_cast<std::size_t>(entries_[id].level + dist_[id]) <= depth_);
  }

  bool depends_on(int from, int target, const std::map<int, int>& chosen) const {
    std::vector<int> stack{from};
    std::unordered_set<int> seen;
    while (!stack.empty()) {
      int cur = stack.back();
      stack.pop_back();
      if (cur == target) return true;
      if (!seen.insert(cur).second) continue;
      auto it = chosen.find(cur);
      if (it == chosen.end()) continue;
      for (int p : entries_[cur].derivations[it->second].premises) stack.push_back(p);
    }
    return false;
  }

  std::string signature(const std::set<int>& needed, const std::map<int, int>& chosen) const {
    std::string s;
    for (auto [k, v] : chosen) s += std::to_string(k) + ":" + std::to_string(v) + ",";
    s += "|";
    for (int n : needed) s += std::to_string(n) + ",";
    return s;
  }

  void dfs(std::set<int>& needed, std::map<int, int>& chosen) {
    if (solutions_.size() >= opts_.max_solutions) return;
    if (needed.empty()) {
      solutions_.push_back(chosen);
      return;
    }
    if (chosen.size() + needed.size() > depth_) return;
    if (!visited_.insert(signature(needed, chosen)).second) return;
    // Expand the hardest outstanding statement first.
    int pick = *std::max_element(needed.begin(), needed.end(), [&](int a, int b) {
      if (entries_[a].level != entries_[b].level) return entries_[a].level < entries_[b].level;
      return a > b;
    });
    const auto& ds = entries_[pick].derivations;
    for (std::size_t d = 0; d < ds.size(); ++d) {
      bool skip = false;
      for (int p : ds[d].premises)
        if (!viable(p) || (p >= num_givens_ && depends_on(p, pick, chosen))) skip = true;
      if (skip) continue;
      std::set<int> next = needed;
      next.erase(pick);
      for (int p : ds[d].premises)
        if (p >= num_givens_ && !chosen.count(p) && p != pick) next.insert(p);
      chosen.emplace(pick, static_cast<int>(d));
      if (chosen.size() + next.size() <= depth_) dfs(next, chosen);
      chosen.erase(pick);
      if (solutions_.size() >= opts_.max_solutions) return;
    }
  }

  Proof to_proof(const std::map<int, int>& chosen) const {
    // Topological order, ties broken by level then id.
    std::vector<int> order;
    std::set<int> placed;
    std::vector<int> remaining;
    for (auto [k, v] : chosen) remaining.push_back(k);
    while (!remaining.empty()) {
      int best = -1;
      for (int c : remaining) {
        const auto& prem = entries_[c].derivations[chosen.at(c)].premises;
        bool ready = std::all_of(prem.begin(), prem.end(),
                                 [&](int p) { return p < num_givens_ || placed.count(p); });
        if (!ready) continue;
        if (best < 0 || entries_[c].level < entries_[best].level ||
            (entries_[c].level == entries_[best].level && c < best))
          best = c;
      }
      order.push_back(best);
      placed.insert(best);
      remaining.erase(std::find(remaining.begin(), remaining.end(), best));
    }
    Proof proof;
    std::vector<int> position(entries_.size(), -1);
    for (int i = 0; i < num_givens_; ++i) position[i] = i;
    int next_pos = num_givens_;
    for (int id : order) {
      const auto& d = entries_[id].derivations[chosen.at(id)];
      ProofStep step{d.rule, {}, entries_[id].expr};
      for (int p : d.premises) step.premises.push_back(static_cast<std::size_t>(position[p]));
      proof.steps.push_back(std::move(step));
      position[id] = next_pos++;
    }
    return proof;
  }

  const Problem& problem_;
  SearchOptions opts_;
  SearchSpace space_;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> ids_;
  int num_givens_ = 0;
  int goal_ = -1;
  std::size_t depth_ = 0;
  std::vector<std::map<int, int>> solutions_;
  std::unordered_set<std::string> visited_;
  int indexed_ = 0;
  std::unordered_map<std::string, std::vector<int>> wanted_by_, by_antecedent_, by_consequent_;
  static constexpr int kFar = 1 << 29;
  std::vector<int> dist_;
};

}  // namespace detail

/// Minimum-length proof of the problem's conclusion from `state`, or none if
/// no proof exists within `opts.max_depth` derivations.
inline std::optional<Proof> shortest_proof_from(const ProofState& state, const Problem& problem,
                                                SearchOptions opts = {}) {
  opts.max_solutions = 1;
  auto sols = detail::ProofSearch(problem, state.statements(), opts).run();
  if (sols.empty()) return std::nullopt;
  return sols.front();
}

/// Up to `limit` minimum-length proofs from `state`.
inline std::vector<Proof> shortest_proofs_from(const ProofState& state, const Problem& problem, SearchOptions opts,
                                               std::size_t limit) {
  opts.max_solutions = std::max<std::size_t>(limit, 1);
  return detail::ProofSearch(problem, state.statements(), opts).run();
}

inline std::optional<Proof> shortest_proof(const Problem& problem, std::size_t max_depth) {
  if (max_depth < 1) throw std::invalid_argument("max_depth must be at least 1");
  SearchOptions opts;
  opts.max_depth = max_depth;
  return shortest_proof_from(ProofState::start(problem), problem, opts);
}

/// Minimum-length proofs from the start state, up to `limit` of them.
inline std::vector<Proof> all_shortest_proofs(const Problem& problem, std::size_t max_depth, std::size_t limit = 5000) {
  SearchOptions opts;
  opts.max_depth = max_depth;
  opts.max_solutions = limit;
  return detail::ProofSearch(problem, ProofState::start(problem).statements(), opts).run();
}

/// Rules used by at least one minimum-length proof.
inline std::set<RuleId> targeted_rules(const Problem& problem, std::size_t max_depth) {
  std::set<RuleId> out;
  for (const Proof& p : all_shortest_proofs(problem, max_depth))
    for (const ProofStep& s : p.steps) out.insert(s.rule);
  return out;
}

}  // namespace hnu
