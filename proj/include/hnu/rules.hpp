#pragma once

// The rule palette: eight inference rules and ten replacement rules.
// Replacement rules rewrite a whole statement, in either direction.

#include <array>
#include <cctype>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hnu/expr.hpp"

namespace hnu {

enum class RuleKind : std::uint8_t { kInference, kReplacement };

enum class RuleId : std::uint8_t {
  kModusPonens,
  kModusTollens,
  kDisjunctiveSyllogism,
  kHypotheticalSyllogism,
  kSimplification,
  kConjunction,
  kAddition,
  kConstructiveDilemma,
  kDoubleNegation,
  kDeMorgan,
  kCommutativity,
  kAssociativity,
  kDistribution,
  kTransposition,
  kMaterialImplication,
  kMaterialEquivalence,
  kExportation,
  kTautology,
};

struct Rule {
  RuleId id;
  std::string_view name;
  std::string_view abbrev;
  RuleKind kind;
  int arity;
};

inline constexpr std::array<Rule, 18> kRules{{
    {RuleId::kModusPonens, "ModusPonens", "MP", RuleKind::kInference, 2},
    {RuleId::kModusTollens, "ModusTollens", "MT", RuleKind::kInference, 2},
    {RuleId::kDisjunctiveSyllogism, "DisjunctiveSyllogism", "DS", RuleKind::kInference, 2},
    {RuleId::kHypotheticalSyllogism, "HypotheticalSyllogism", "HS", RuleKind::kInference, 2},
    {RuleId::kSimplification, "Simplification", "Simp", RuleKind::kInference, 1},
    {RuleId::kConjunction, "Conjunction", "Conj", RuleKind::kInference, 2},
    {RuleId::kAddition, "Addition", "Add", RuleKind::kInference, 1},
    {RuleId::kConstructiveDilemma, "ConstructiveDilemma", "CD", RuleKind::kInference, 2},
    {RuleId::kDoubleNegation, "DoubleNegation", "DN", RuleKind::kReplacement, 1},
    {RuleId::kDeMorgan, "DeMorgan", "DeM", RuleKind::kReplacement, 1},
    {RuleId::kCommutativity, "Commutativity", "Comm", RuleKind::kReplacement, 1},
    {RuleId::kAssociativity, "Associativity", "Assoc", RuleKind::kReplacement, 1},
    {RuleId::kDistribution, "Distribution", "Dist", RuleKind::kReplacement, 1},
    {RuleId::kTransposition, "Transposition", "Trans", RuleKind::kReplacement, 1},
    {RuleId::kMaterialImplication, "MaterialImplication", "Impl", RuleKind::kReplacement, 1},
    {RuleId::kMaterialEquivalence, "MaterialEquivalence", "Equiv", RuleKind::kReplacement, 1},
    {RuleId::kExportation, "Exportation", "Exp", RuleKind::kReplacement, 1},
    {RuleId::kTautology, "Tautology", "Taut", RuleKind::kReplacement, 1},
}};

inline const Rule& rule_info(RuleId id) { return kRules[static_cast<std::size_t>(id)]; }

/// Accepts the full name or the abbreviation, case-insensitively.
inline std::optional<RuleId> parse_rule(std::string_view text) {
  auto iequal = [](std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i])))
        return false;
    return true;
  };
  for (const Rule& r : kRules)
    if (iequal(text, r.name) || iequal(text, r.abbrev)) return r.id;
  return std::nullopt;
}

namespace detail {

inline bool is(const Expr& e, Op op) { return e.valid() && e.op() == op; }

inline void push_unique(std::vector<Expr>& out, Expr e) {
  for (const Expr& x : out)
    if (x.key() == e.key()) return;
  out.push_back(std::move(e));
}

// Binary inference rules on an ordered premise pair (major, minor).
inline void apply_binary(RuleId id, const Expr& x, const Expr& y, std::vector<Expr>& out) {
  switch (id) {
    case RuleId::kModusPonens:
      if (is(x, Op::kImplies) && equivalent(x.lhs(), y)) push_unique(out, x.rhs());
      break;
    case RuleId::kModusTollens:
      if (is(x, Op::kImplies) && is(y, Op::kNot) && equivalent(x.rhs(), y.operand()))
        push_unique(out, Not(x.lhs()));
      break;
    case RuleId::kDisjunctiveSyllogism:
      if (is(x, Op::kOr) && is(y, Op::kNot)) {
        if (equivalent(x.lhs(), y.operand())) push_unique(out, x.rhs());
        if (equivalent(x.rhs(), y.operand())) push_unique(out, x.lhs());
      }
      break;
    case RuleId::kHypotheticalSyllogism:
      if (is(x, Op::kImplies) && is(y, Op::kImplies) && equivalent(x.rhs(), y.lhs()))
        push_unique(out, Implies(x.lhs(), y.rhs()));
      break;
    case RuleId::kConjunction:
      push_unique(out, And(x, y));
      break;
    case RuleId::kConstructiveDilemma:
      if (is(x, Op::kAnd) && is(x.lhs(), Op::kImplies) && is(x.rhs(), Op::kImplies) && is(y, Op::kOr)) {
        const Expr& f = x.lhs();
        const Expr& g = x.rhs();
        if (equivalent(f.lhs(), y.lhs()) && equivalent(g.lhs(), y.rhs())) push_unique(out, Or(f.rhs(), g.rhs()));
        if (equivalent(f.lhs(), y.rhs()) && equivalent(g.lhs(), y.lhs())) push_unique(out, Or(g.rhs(), f.rhs()));
      }
      break;
    default:
      break;
  }
}

inline void rewrite(RuleId id, const Expr& e, std::vector<Expr>& out) {
  switch (id) {
    case RuleId::kDoubleNegation:
      push_unique(out, Not(Not(e)));
      if (is(e, Op::kNot) && is(e.operand(), Op::kNot)) push_unique(out, e.operand().operand());
      break;
    case RuleId::kDeMorgan:
      if (is(e, Op::kNot) && is(e.operand(), Op::kAnd))
        push_unique(out, Or(Not(e.operand().lhs()), Not(e.operand().rhs())));
      if (is(e, Op::kNot) && is(e.operand(), Op::kOr))
        push_unique(out, And(Not(e.operand().lhs()), Not(e.operand().rhs())));
      if (is(e, Op::kOr) && is(e.lhs(), Op::kNot) && is(e.rhs(), Op::kNot))
        push_unique(out, Not(And(e.lhs().operand(), e.rhs().operand())));
      if (is(e, Op::kAnd) && is(e.lhs(), Op::kNot) && is(e.rhs(), Op::kNot))
        push_unique(out, Not(Or(e.lhs().operand(), e.rhs().operand())));
      break;
    case RuleId::kCommutativity:
      if (is(e, Op::kAnd) || is(e, Op::kOr)) push_unique(out, Expr::binary(e.op(), e.rhs(), e.lhs()));
      break;
    case RuleId::kAssociativity:
      if ((is(e, Op::kAnd) || is(e, Op::kOr)) && is(e.lhs(), e.op()))
        push_unique(out, Expr::binary(e.op(), e.lhs().lhs(), Expr::binary(e.op(), e.lhs().rhs(), e.rhs())));
      if ((is(e, Op::kAnd) || is(e, Op::kOr)) && is(e.rhs(), e.op()))
        push_unique(out, Expr::binary(e.op(), Expr::binary(e.op(), e.lhs(), e.rhs().lhs()), e.rhs().rhs()));
      break;
    case RuleId::kDistribution: {
      auto spread = [&](Op outer, Op inner) {
        // a outer (b inner c)  <->  (a outer b) inner (a outer c)
        if (is(e, outer) && is(e.rhs(), inner))
          push_unique(out, Expr::binary(inner, Expr::binary(outer, e.lhs(), e.rhs().lhs()),
                                        Expr::binary(outer, e.lhs(), e.rhs().rhs())));
        if (is(e, inner) && is(e.lhs(), outer) && is(e.rhs(), outer) && equivalent(e.lhs().lhs(), e.rhs().lhs()))
          push_unique(out, Expr::binary(outer, e.lhs().lhs(), Expr::binary(inner, e.lhs().rhs(), e.rhs().rhs())));
      };
      spread(Op::kAnd, Op::kOr);
      spread(Op::kOr, Op::kAnd);
      break;
    }
    case RuleId::kTransposition:
      if (is(e, Op::kImplies)) {
        push_unique(out, Implies(Not(e.rhs()), Not(e.lhs())));
        if (is(e.lhs(), Op::kNot) && is(e.rhs(), Op::kNot))
          push_unique(out, Implies(e.rhs().operand(), e.lhs().operand()));
      }
      break;
    case RuleId::kMaterialImplication:
      if (is(e, Op::kImplies)) push_unique(out, Or(Not(e.lhs()), e.rhs()));
      if (is(e, Op::kOr) && is(e.lhs(), Op::kNot)) push_unique(out, Implies(e.lhs().operand(), e.rhs()));
      break;
    case RuleId::kMaterialEquivalence:
      if (is(e, Op::kIff)) {
        push_unique(out, And(Implies(e.lhs(), e.rhs()), Implies(e.rhs(), e.lhs())));
        push_unique(out, Or(And(e.lhs(), e.rhs()), And(Not(e.lhs()), Not(e.rhs()))));
      }
      if (is(e, Op::kAnd) && is(e.lhs(), Op::kImplies) && is(e.rhs(), Op::kImplies) &&
          equivalent(e.lhs().lhs(), e.rhs().rhs()) && equivalent(e.lhs().rhs(), e.rhs().lhs()))
        push_unique(out, Iff(e.lhs().lhs(), e.lhs().rhs()));
      if (is(e, Op::kOr) && is(e.lhs(), Op::kAnd) && is(e.rhs(), Op::kAnd) && is(e.rhs().lhs(), Op::kNot) &&
          is(e.rhs().rhs(), Op::kNot) && equivalent(e.lhs().lhs(), e.rhs().lhs().operand()) &&
          equivalent(e.lhs().rhs(), e.rhs().rhs().operand()))
        push_unique(out, Iff(e.lhs().lhs(), e.lhs().rhs()));
      break;
    case RuleId::kExportation:
      if (is(e, Op::kImplies) && is(e.lhs(), Op::kAnd))
        push_unique(out, Implies(e.lhs().lhs(), Implies(e.lhs().rhs(), e.rhs())));
      if (is(e, Op::kImplies) && is(e.rhs(), Op::kImplies))
        push_unique(out, Implies(And(e.lhs(), e.rhs().lhs()), e.rhs().rhs()));
      break;
    case RuleId::kTautology:
      push_unique(out, And(e, e));
      push_unique(out, Or(e, e));
      if ((is(e, Op::kAnd) || is(e, Op::kOr)) && equivalent(e.lhs(), e.rhs())) push_unique(out, e.lhs());
      break;
    default:
      break;
  }
}

}  // namespace detail

/// All conclusions obtainable from one application of `id` to `premises`.
/// Binary rules treat the premises as a set and try both orders. Addition
/// needs the candidate disjuncts in `addends`; it yields nothing without them.
/// Throws std::invalid_argument on an arity mismatch.
inline std::vector<Expr> apply_rule(RuleId id, std::span<const Expr> premises,
                                    std::span<const Expr> addends = {}) {
  const Rule& r = rule_info(id);
  if (premises.size() != static_cast<std::size_t>(r.arity))
    throw std::invalid_argument(std::string(r.name) + " expects " + std::to_string(r.arity) + " premise(s), got " +
                                std::to_string(premises.size()));
  std::vector<Expr> out;
  if (r.arity == 2) {
    detail::apply_binary(id, premises[0], premises[1], out);
    detail::apply_binary(id, premises[1], premises[0], out);
    return out;
  }
  const Expr& p = premises[0];
  switch (id) {
    case RuleId::kSimplification:
      if (detail::is(p, Op::kAnd)) {
        detail::push_unique(out, p.lhs());
        detail::push_unique(out, p.rhs());
      }
      break;
    case RuleId::kAddition:
      for (const Expr& a : addends) detail::push_unique(out, Or(p, a));
      break;
    default:
      detail::rewrite(id, p, out);
      break;
  }
  return out;
}

inline std::vector<Expr> apply_rule(RuleId id, std::initializer_list<Expr> premises,
                                    std::span<const Expr> addends = {}) {
  std::vector<Expr> v(premises);
  return apply_rule(id, std::span<const Expr>(v), addends);
}

}  // namespace hnu
