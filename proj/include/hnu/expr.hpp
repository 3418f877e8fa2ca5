#pragma once

// Propositional expressions: immutable shared trees with a cached
// normalized key, a precedence-aware printer and a recursive-descent parser.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hnu {

enum class Op : std::uint8_t { kAtom, kNot, kAnd, kOr, kImplies, kIff };

class Expr {
 public:
  Expr() = default;

  static Expr atom(char name);
  static Expr negation(Expr operand);
  static Expr binary(Op op, Expr lhs, Expr rhs);

  bool valid() const { return node_ != nullptr; }
  Op op() const;
  char atom_name() const;
  const Expr& operand() const { return lhs(); }
  const Expr& lhs() const;
  const Expr& rhs() const;

  /// Node count.
  std::size_t size() const;

  /// Normalized key: and/or operands flattened and sorted; everything else
  /// kept structurally. Two expressions are treated as the same statement
  /// iff their keys are equal.
  const std::string& key() const;

  /// Surface form using the input grammar with minimal parentheses.
  std::string str() const;

  friend bool operator==(const Expr& a, const Expr& b);

 private:
  struct Node;
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

struct Expr::Node {
  Op op = Op::kAtom;
  char name = 0;
  Expr a;
  Expr b;
  std::size_t size = 1;
  std::string key;
};

inline bool equivalent(const Expr& a, const Expr& b) { return a.key() == b.key(); }

namespace detail {

inline int precedence(Op op) {
  switch (op) {
    case Op::kAtom: return 6;
    case Op::kNot: return 5;
    case Op::kAnd: return 4;
    case Op::kOr: return 3;
    case Op::kImplies: return 2;
    case Op::kIff: return 1;
  }
  return 0;
}

inline std::string_view symbol(Op op) {
  switch (op) {
    case Op::kAnd: return "&";
    case Op::kOr: return "|";
    case Op::kImplies: return "->";
    case Op::kIff: return "<->";
    case Op::kNot: return "!";
    case Op::kAtom: break;
  }
  return "";
}

inline void collect_flat(const Expr& e, Op op, std::vector<std::string>& out) {
  if (e.op() == op) {
    collect_flat(e.lhs(), op, out);
    collect_flat(e.rhs(), op, out);
  } else {
    out.push_back(e.key());
  }
}

inline std::string make_key(Op op, char name, const Expr& a, const Expr& b) {
  switch (op) {
    case Op::kAtom: return std::string(1, name);
    case Op::kNot: return "!" + a.key();
    case Op::kAnd:
    case Op::kOr: {
      std::vector<std::string> parts;
      collect_flat(a, op, parts);
      collect_flat(b, op, parts);
      std::sort(parts.begin(), parts.end());
      std::string k = op == Op::kAnd ? "&(" : "|(";
      for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) k += ',';
        k += parts[i];
      }
      return k + ")";
    }
    case Op::kImplies: return ">(" + a.key() + "," + b.key() + ")";
    case Op::kIff: return "=(" + a.key() + "," + b.key() + ")";
  }
  return {};
}

inline void print(const Expr& e, std::string& out) {
  switch (e.op()) {
    case Op::kAtom:
      out += e.atom_name();
      return;
    case Op::kNot: {
      out += '!';
      bool parens = e.operand().op() != Op::kAtom && e.operand().op() != Op::kNot;
      if (parens) out += '(';
      print(e.operand(), out);
      if (parens) out += ')';
      return;
    }
    default: break;
  }
  const int p = precedence(e.op());
  const bool right_assoc = e.op() == Op::kImplies;
  const int pl = precedence(e.lhs().op());
  const int pr = precedence(e.rhs().op());
  bool lp = pl < p || (pl == p && right_assoc);
  bool rp = pr < p || (pr == p && !right_assoc);
  if (lp) out += '(';
  print(e.lhs(), out);
  if (lp) out += ')';
  out += ' ';
  out += symbol(e.op());
  out += ' ';
  if (rp) out += '(';
  print(e.rhs(), out);
  if (rp) out += ')';
}

}  // namespace detail

inline Expr Expr::atom(char name) {
  if (name < 'a' || name > 'z') throw std::invalid_argument("atom must be a lowercase letter");
  auto n = std::make_shared<Node>();
  n->op = Op::kAtom;
  n->name = name;
  n->key = std::string(1, name);
  return Expr(std::move(n));
}

inline Expr Expr::negation(Expr operand) {
  if (!operand.valid()) throw std::invalid_argument("negation of empty expression");
  auto n = std::make_shared<Node>();
  n->op = Op::kNot;
  n->size = operand.size() + 1;
  n->key = detail::make_key(Op::kNot, 0, operand, {});
  n->a = std::move(operand);
  return Expr(std::move(n));
}

inline Expr Expr::binary(Op op, Expr lhs, Expr rhs) {
  if (op == Op::kAtom || op == Op::kNot) throw std::invalid_argument("not a binary connective");
  if (!lhs.valid() || !rhs.valid()) throw std::invalid_argument("binary with empty operand");
  auto n = std::make_shared<Node>();
  n->op = op;
  n->size = lhs.size() + rhs.size() + 1;
  n->key = detail::make_key(op, 0, lhs, rhs);
  n->a = std::move(lhs);
  n->b = std::move(rhs);
  return Expr(std::move(n));
}

inline Op Expr::op() const { return node_->op; }
inline char Expr::atom_name() const { return node_->name; }
inline const Expr& Expr::lhs() const { return node_->a; }
inline const Expr& Expr::rhs() const { return node_->b; }
inline std::size_t Expr::size() const { return node_ ? node_->size : 0; }

inline const std::string& Expr::key() const {
  static const std::string empty;
  return node_ ? node_->key : empty;
}

inline std::string Expr::str() const {
  std::string out;
  if (node_) detail::print(*this, out);
  return out;
}

inline bool operator==(const Expr& a, const Expr& b) {
  if (a.node_ == b.node_) return true;
  if (!a.node_ || !b.node_) return false;
  if (a.op() != b.op()) return false;
  switch (a.op()) {
    case Op::kAtom: return a.atom_name() == b.atom_name();
    case Op::kNot: return a.operand() == b.operand();
    default: return a.lhs() == b.lhs() && a.rhs() == b.rhs();
  }
}

// Shorthands used heavily by the rule table and tests.
inline Expr Not(Expr a) { return Expr::negation(std::move(a)); }
inline Expr And(Expr a, Expr b) { return Expr::binary(Op::kAnd, std::move(a), std::move(b)); }
inline Expr Or(Expr a, Expr b) { return Expr::binary(Op::kOr, std::move(a), std::move(b)); }
inline Expr Implies(Expr a, Expr b) { return Expr::binary(Op::kImplies, std::move(a), std::move(b)); }
inline Expr Iff(Expr a, Expr b) { return Expr::binary(Op::kIff, std::move(a), std::move(b)); }

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : std::runtime_error(what + " at position " + std::to_string(position)),
        position_(position) {}
  /// 1-based character position; input length + 1 means end of input.
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

namespace detail {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Expr parse() {
    Expr e = parse_iff();
    skip_ws();
    if (pos_ < text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_ + 1); }

  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' ||
                                   text_[pos_] == '\n' || text_[pos_] == '\r'))
      ++pos_;
  }

  bool accept(std::string_view tok) {
    skip_ws();
    if (text_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  Expr parse_iff() {
    Expr e = parse_implies();
    while (accept("<->")) e = Iff(e, parse_implies());
    return e;
  }

  Expr parse_implies() {
    Expr e = parse_or();
    if (accept("->")) return Implies(e, parse_implies());
    return e;
  }

  Expr parse_or() {
    Expr e = parse_and();
    while (accept("|")) e = Or(e, parse_and());
    return e;
  }

  Expr parse_and() {
    Expr e = parse_unary();
    while (accept("&")) e = And(e, parse_unary());
    return e;
  }

  Expr parse_unary() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    char c = text_[pos_];
    if (c == '!') {
      ++pos_;
      return Not(parse_unary());
    }
    if (c == '(') {
      ++pos_;
      Expr e = parse_iff();
      if (!accept(")")) {
        skip_ws();
        fail(pos_ >= text_.size() ? "unexpected end of input, expected ')'" : "expected ')'");
      }
      return e;
    }
    if (c >= 'a' && c <= 'z') {
      ++pos_;
      if (pos_ < text_.size() && text_[pos_] >= 'a' && text_[pos_] <= 'z') fail("atoms are single letters");
      return Expr::atom(c);
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses the expression grammar: atoms a-z, `!`, `&`, `|`, `->` (right
/// associative), `<->`, parentheses. Throws ParseError.
inline Expr parse_expression(std::string_view text) { return detail::Parser(text).parse(); }

/// Distinct subformulas (by key), sorted by key.
inline void collect_subformulas(const Expr& e, std::vector<Expr>& out) {
  if (!e.valid()) return;
  auto it = std::find_if(out.begin(), out.end(), [&](const Expr& x) { return x.key() == e.key(); });
  if (it == out.end()) out.push_back(e);
  if (e.op() == Op::kAtom) return;
  collect_subformulas(e.lhs(), out);
  if (e.op() != Op::kNot) collect_subformulas(e.rhs(), out);
}

}  // namespace hnu
