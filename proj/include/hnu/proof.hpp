#pragma once

// Problems, proof states, step checking and state canonicalization.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hnu/expr.hpp"
#include "hnu/rules.hpp"

namespace hnu {

enum class Section : std::uint8_t { kIntroduction, kPretest, kTraining, kPosttest };

inline std::string_view section_name(Section s) {
  switch (s) {
    case Section::kIntroduction: return "introduction";
    case Section::kPretest: return "pretest";
    case Section::kTraining: return "training";
    case Section::kPosttest: return "posttest";
  }
  return "";
}

inline std::optional<Section> parse_section(std::string_view s) {
  for (Section x : {Section::kIntroduction, Section::kPretest, Section::kTraining, Section::kPosttest})
    if (section_name(x) == s) return x;
  return std::nullopt;
}

struct Problem {
  std::string id;
  std::vector<Expr> premises;
  Expr conclusion;
  std::vector<RuleId> allowed_rules;
  Section section = Section::kTraining;
  std::size_t optimal_length = 1;

  bool allows(RuleId r) const {
    return std::find(allowed_rules.begin(), allowed_rules.end(), r) != allowed_rules.end();
  }
};

struct Justification {
  RuleId rule;
  std::vector<std::size_t> premises;  // indices at derivation time
};

enum class StepCheck : std::uint8_t { kCorrect, kIncorrect };
enum class DeriveOutcome : std::uint8_t { kAdded, kIncorrect, kDuplicate };
enum class KeyMode : std::uint8_t { kOrdered, kUnordered };

inline std::string_view key_mode_name(KeyMode m) { return m == KeyMode::kOrdered ? "ordered" : "unordered"; }
inline std::optional<KeyMode> parse_key_mode(std::string_view s) {
  if (s == "ordered") return KeyMode::kOrdered;
  if (s == "unordered") return KeyMode::kUnordered;
  return std::nullopt;
}

using StateKey = std::string;

class ProofState {
 public:
  ProofState() = default;

  static ProofState start(const Problem& p) {
    ProofState s;
    s.problem_id_ = p.id;
    s.statements_ = p.premises;
    s.justifications_.assign(p.premises.size(), std::nullopt);
    s.num_premises_ = p.premises.size();
    return s;
  }

  const std::string& problem_id() const { return problem_id_; }
  const std::vector<Expr>& statements() const { return statements_; }
  std::size_t size() const { return statements_.size(); }
  std::size_t num_premises() const { return num_premises_; }
  std::size_t num_derived() const { return statements_.size() - num_premises_; }
  const std::optional<Justification>& justification(std::size_t i) const { return justifications_.at(i); }

  std::optional<std::size_t> find(const Expr& e) const {
    for (std::size_t i = 0; i < statements_.size(); ++i)
      if (statements_[i].key() == e.key()) return i;
    return std::nullopt;
  }
  bool contains(const Expr& e) const { return find(e).has_value(); }

  /// Appends `derived` if it is a correct application and not already present.
  DeriveOutcome derive(RuleId rule, std::span<const std::size_t> premises, const Expr& derived);

  /// Appends without checking; used by replay paths that already validated.
  void push_derived(const Expr& e, Justification j) {
    statements_.push_back(e);
    justifications_.emplace_back(std::move(j));
  }

  /// Removes a derived statement. Premises cannot be deleted.
  void remove(std::size_t index) {
    if (index >= statements_.size()) throw std::out_of_range("statement index out of range");
    if (index < num_premises_) throw std::invalid_argument("premises cannot be deleted");
    statements_.erase(statements_.begin() + static_cast<std::ptrdiff_t>(index));
    justifications_.erase(justifications_.begin() + static_cast<std::ptrdiff_t>(index));
  }

  bool is_goal(const Problem& p) const { return contains(p.conclusion); }

 private:
  std::string problem_id_;
  std::vector<Expr> statements_;
  std::vector<std::optional<Justification>> justifications_;
  std::size_t num_premises_ = 0;
};

/// True iff `derived` is among apply_rule(rule, selected statements). For
/// Addition the extra disjunct is read off `derived`. Repeated indices make
/// the application incorrect. Throws std::out_of_range on a bad index.
inline StepCheck check_step(const ProofState& state, RuleId rule, std::span<const std::size_t> premise_indices,
                            const Expr& derived) {
  std::vector<Expr> selected;
  for (std::size_t i : premise_indices) {
    if (i >= state.size()) throw std::out_of_range("premise index " + std::to_string(i) + " out of range");
    selected.push_back(state.statements()[i]);
  }
  if (premise_indices.size() != static_cast<std::size_t>(rule_info(rule).arity)) return StepCheck::kIncorrect;
  if (premise_indices.size() == 2 && premise_indices[0] == premise_indices[1]) return StepCheck::kIncorrect;
  std::vector<Expr> addends;
  if (rule == RuleId::kAddition && derived.valid() && derived.op() == Op::kOr) {
    addends.push_back(derived.rhs());
    addends.push_back(derived.lhs());
  }
  for (const Expr& c : apply_rule(rule, std::span<const Expr>(selected), addends))
    if (equivalent(c, derived)) return StepCheck::kCorrect;
  return StepCheck::kIncorrect;
}

inline StepCheck check_step(const ProofState& state, RuleId rule, std::initializer_list<std::size_t> idx,
                            const Expr& derived) {
  std::vector<std::size_t> v(idx);
  return check_step(state, rule, std::span<const std::size_t>(v), derived);
}

inline DeriveOutcome ProofState::derive(RuleId rule, std::span<const std::size_t> premises, const Expr& derived) {
  if (check_step(*this, rule, premises, derived) != StepCheck::kCorrect) return DeriveOutcome::kIncorrect;
  if (contains(derived)) return DeriveOutcome::kDuplicate;
  push_derived(derived, Justification{rule, std::vector<std::size_t>(premises.begin(), premises.end())});
  return DeriveOutcome::kAdded;
}

/// Ordered keys list derived statements in derivation order; unordered keys
/// sort them. Premises are shared by every state of a problem and omitted.
inline StateKey canonical_state(const ProofState& state, KeyMode mode) {
  std::vector<std::string> keys;
  keys.reserve(state.num_derived());
  for (std::size_t i = state.num_premises(); i < state.size(); ++i) keys.push_back(state.statements()[i].key());
  if (mode == KeyMode::kUnordered) std::sort(keys.begin(), keys.end());
  StateKey out;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (i) out += ';';
    out += keys[i];
  }
  return out;
}

/// One concrete rule application available from a state.
struct Application {
  RuleId rule;
  std::vector<std::size_t> premises;
  Expr derived;
};

/// The statements proof search and simulated students will build.
///
/// Addition only introduces subformulas of the problem as the new disjunct,
/// and Conjunction only builds conjunctions from the problem's vocabulary.
/// The vocabulary starts from the subformulas plus the negations that Modus
/// Tollens and Disjunctive Syllogism would consume, is closed for two rounds
/// under the allowed replacement rules, and finally gains the pairs of
/// implications that Constructive Dilemma could use. Nothing larger than
/// `max_expr_size` is built.
struct SearchSpace {
  std::vector<Expr> addends;
  std::vector<Expr> conjunctions;
  std::set<std::string> conjunction_keys;
  std::size_t max_expr_size = 0;

  static SearchSpace for_problem(const Problem& p) {
    SearchSpace space;
    for (const Expr& e : p.premises) collect_subformulas(e, space.addends);
    collect_subformulas(p.conclusion, space.addends);
    std::sort(space.addends.begin(), space.addends.end(),
              [](const Expr& a, const Expr& b) { return a.key() < b.key(); });
    std::vector<Expr> vocab = space.addends;
    for (const Expr& e : space.addends) {
      if (e.op() == Op::kImplies) collect_subformulas(Not(e.rhs()), vocab);
      if (e.op() == Op::kOr) {
        collect_subformulas(Not(e.lhs()), vocab);
        collect_subformulas(Not(e.rhs()), vocab);
      }
    }
    for (int round = 0; round < 2; ++round) {
      std::vector<Expr> grown = vocab;
      for (const Expr& e : vocab)
        for (RuleId r : p.allowed_rules) {
          if (rule_info(r).kind != RuleKind::kReplacement) continue;
          if (r == RuleId::kDoubleNegation || r == RuleId::kTautology) continue;
          for (const Expr& x : apply_rule(r, std::span<const Expr>(&e, 1))) collect_subformulas(x, grown);
        }
      vocab.swap(grown);
    }
    std::vector<Expr> dilemmas;
    for (const Expr& d : vocab) {
      if (d.op() != Op::kOr) continue;
      for (const Expr& f : vocab) {
        if (f.op() != Op::kImplies || !equivalent(f.lhs(), d.lhs())) continue;
        for (const Expr& g : vocab)
          if (g.op() == Op::kImplies && equivalent(g.lhs(), d.rhs())) dilemmas.push_back(And(f, g));
      }
    }
    for (const Expr& e : dilemmas) collect_subformulas(e, vocab);
    std::size_t biggest = 0;
    for (const Expr& e : vocab) {
      biggest = std::max(biggest, e.size());
      if (e.op() == Op::kAnd && space.conjunction_keys.insert(e.key()).second) space.conjunctions.push_back(e);
    }
    std::sort(space.conjunctions.begin(), space.conjunctions.end(),
              [](const Expr& a, const Expr& b) { return a.key() < b.key(); });
    space.max_expr_size = biggest + 2;
    return space;
  }

  bool admits(RuleId rule, const Expr& derived) const {
    if (derived.size() > max_expr_size) return false;
    if (rule == RuleId::kConjunction) return conjunction_keys.count(derived.key()) > 0;
    return true;
  }
};

/// Every application of an allowed rule inside `space` that yields a
/// statement not yet in the state. Deterministic order: rule order, then
/// premise indices, then conclusion order.
inline std::vector<Application> applicable_actions(const ProofState& state, const Problem& problem,
                                                   const SearchSpace& space) {
  std::vector<Application> out;
  std::set<std::string> seen;  // rule|i|j|key
  const auto& st = state.statements();
  auto emit = [&](RuleId r, std::vector<std::size_t> idx, const std::vector<Expr>& results) {
    for (const Expr& d : results) {
      if (!space.admits(r, d) || state.contains(d)) continue;
      std::string sig = std::to_string(static_cast<int>(r)) + "|" + std::to_string(idx.front()) + "|" +
                        std::to_string(idx.back()) + "|" + d.key();
      if (!seen.insert(sig).second) continue;
      out.push_back(Application{r, idx, d});
    }
  };
  for (RuleId r : problem.allowed_rules) {
    if (rule_info(r).arity == 1) {
      for (std::size_t i = 0; i < st.size(); ++i) {
        std::span<const Expr> one(&st[i], 1);
        emit(r, {i}, apply_rule(r, one, space.addends));
      }
    } else {
      for (std::size_t i = 0; i < st.size(); ++i)
        for (std::size_t j = i + 1; j < st.size(); ++j) {
          const Expr pair[2] = {st[i], st[j]};
          emit(r, {i, j}, apply_rule(r, std::span<const Expr>(pair, 2)));
        }
    }
  }
  return out;
}

/// A correct application deriving `target` from the current statements, if
/// one exists. Used to carry out hinted steps.
inline std::optional<Application> find_justification(const ProofState& state, const Problem& problem,
                                                     const Expr& target) {
  const auto& st = state.statements();
  for (RuleId r : problem.allowed_rules) {
    if (rule_info(r).arity == 1) {
      for (std::size_t i = 0; i < st.size(); ++i)
        if (check_step(state, r, {i}, target) == StepCheck::kCorrect) return Application{r, {i}, target};
    } else {
      for (std::size_t i = 0; i < st.size(); ++i)
        for (std::size_t j = i + 1; j < st.size(); ++j)
          if (check_step(state, r, {i, j}, target) == StepCheck::kCorrect)
            return Application{r, {i, j}, target};
    }
  }
  return std::nullopt;
}

}  // namespace hnu
