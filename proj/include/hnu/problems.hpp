#pragma once

// Problem records (one JSON object per line) and the shipped problem set.

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "hnu/search.hpp"

namespace hnu {

class ProblemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline nlohmann::json problem_to_json(const Problem& p) {
  nlohmann::json j;
  j["id"] = p.id;
  j["premises"] = nlohmann::json::array();
  for (const Expr& e : p.premises) j["premises"].push_back(e.str());
  j["conclusion"] = p.conclusion.str();
  j["allowed_rules"] = nlohmann::json::array();
  for (RuleId r : p.allowed_rules) j["allowed_rules"].push_back(std::string(rule_info(r).abbrev));
  j["section"] = std::string(section_name(p.section));
  j["optimal_length"] = p.optimal_length;
  return j;
}

inline Problem problem_from_json(const nlohmann::json& j) {
  Problem p;
  try {
    p.id = j.at("id").get<std::string>();
    for (const auto& s : j.at("premises")) p.premises.push_back(parse_expression(s.get<std::string>()));
    p.conclusion = parse_expression(j.at("conclusion").get<std::string>());
    for (const auto& r : j.at("allowed_rules")) {
      auto id = parse_rule(r.get<std::string>());
      if (!id) throw ProblemError("unknown rule '" + r.get<std::string>() + "'");
      p.allowed_rules.push_back(*id);
    }
    auto section = parse_section(j.at("section").get<std::string>());
    if (!section) throw ProblemError("unknown section '" + j.at("section").get<std::string>() + "'");
    p.section = *section;
    p.optimal_length = j.at("optimal_length").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ProblemError(std::string("malformed problem record: ") + e.what());
  } catch (const ParseError& e) {
    throw ProblemError(std::string("bad expression: ") + e.what());
  }
  if (p.optimal_length < 1) throw ProblemError("problem " + p.id + ": optimal_length must be at least 1");
  return p;
}

/// Checks a problem against the proof search: the conclusion must be
/// provable and the recorded optimal length must be the true minimum.
inline void verify_problem(const Problem& p, std::size_t slack = 2) {
  auto proof = shortest_proof(p, p.optimal_length + slack);
  if (!proof) throw ProblemError("problem " + p.id + ": conclusion not provable within the depth bound");
  if (proof->length() != p.optimal_length)
    throw ProblemError("problem " + p.id + ": optimal_length is " + std::to_string(p.optimal_length) +
                       " but the shortest proof has " + std::to_string(proof->length()) + " steps");
}

inline std::vector<Problem> parse_problems(std::istream& in, bool verify = true) {
  std::vector<Problem> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      out.push_back(problem_from_json(j));
      if (verify) verify_problem(out.back());
    } catch (const nlohmann::json::exception& e) {
      throw ProblemError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const ProblemError& e) {
      throw ProblemError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<Problem> load_problems(const std::string& path, bool verify = true) {
  std::ifstream in(path);
  if (!in) throw ProblemError("cannot open " + path);
  return parse_problems(in, verify);
}

inline void write_problems(const std::vector<Problem>& problems, std::ostream& out) {
  for (const Problem& p : problems) out << problem_to_json(p).dump() << '\n';
}

namespace detail {

inline constexpr std::string_view kShippedProblems = R"jsonl(
{"id":"pre1","premises":["!(p | q)","r -> p"],"conclusion":"!r","allowed_rules":["MP","MT","DS","HS","Simp","Conj","Add","CD","DN","DeM","Impl","Equiv"],"section":"pretest","optimal_length":3}
{"id":"pre2","premises":["!(p & q)","p","q | r"],"conclusion":"r","allowed_rules":["MP","MT","DS","HS","Simp","Conj","Add","CD","DN","DeM","Impl","Equiv"],"section":"pretest","optimal_length":4}
{"id":"train01","premises":["p -> q","q -> r","p & s"],"conclusion":"r","allowed_rules":["MP","MT","DS","HS","Simp","Conj","Add","CD","DN","DeM","Impl","Equiv"],"section":"training","optimal_length":3}
{"id":"train02","premises":["!q","p -> q","p | r"],"conclusion":"r | s","allowed_rules":["MP","MT","DS","HS","Simp","Conj","Add","CD","DN","DeM","Impl","Equiv"],"section":"training","optimal_length":3}
{"id":"train03","premises":["p | q","!p","q -> r","r -> s"],"conclusion":"s & q","allowed_rules":["MP","MT","DS","HS","Simp","Conj","Add","CD","DN","DeM","Impl","Equiv"],"section":"training","optimal_length":4}
{"id":"train04","premises":["p -> (q -> r)","p & q"],"conclusion":"r","allowed_rules":["MP","MT","DS","HS","Simp","Conj","Add","CD","DN","DeM","Impl","Equiv"],"section":"training","optimal_length":4}
{"id":"train05","premises":["p & q","p -> r","q -> s"],"conclusion":"r & s","allowed_rules":["MP","MT","DS","HS","Simp","Conj","Add","CD","DN","DeM","Impl","Equiv"],"section":"training","optimal_length":5}
{"id":"train06","premises":["p | q -> r","p","r -> s","s -> t"],"conclusion":"t & p","allowed_rules":["MP","MT","DS","HS","Simp","Conj","Add","CD","DN","DeM","Impl","Equiv"],"section":"training","optimal_length":5}
{"id":"train07","premises":["!(p & q)","p","r -> q","s | r"],"conclusion":"s","allowed_rules":["MP","MT","DS","HS","Simp","Conj","Add","CD","DN","DeM","Impl","Equiv"],"section":"training","optimal_length":5}
{"id":"train08","premises":["p -> q","q -> r","r -> s","s -> t","p"],"conclusion":"t & q","allowed_rules":["MP","MT","DS","HS","Simp","Conj","Add","CD","DN","DeM","Impl","Equiv"],"section":"training","optimal_length":5}
{"id":"train09","premises":["p -> q","q | r -> s","!s | t","p"],"conclusion":"t","allowed_rules":["MP","MT","DS","HS","Simp","Conj","Add","CD","DN","DeM","Impl","Equiv"],"section":"training","optimal_length":5}
{"id":"train10","premises":["(p -> q) & (r -> s)","p | r","q | s -> t","t -> u","!u | w"],"conclusion":"w","allowed_rules":["MP","MT","DS","HS","Simp","Conj","Add","CD","DN","DeM","Impl","Equiv"],"section":"training","optimal_length":5}
{"id":"train11","premises":["!(p | q)","r -> p","s -> q"],"conclusion":"!r & !s","allowed_rules":["MP","MT","DS","HS","Simp","Conj","Add","CD","DN","DeM","Impl","Equiv"],"section":"training","optimal_length":6}
{"id":"train12","premises":["p -> q & r","p","r -> s","q -> t"],"conclusion":"s & t","allowed_rules":["MP","MT","DS","HS","Simp","Conj","Add","CD","DN","DeM","Impl","Equiv"],"section":"training","optimal_length":6}
{"id":"train13","premises":["p & q -> r","!r","p","s -> q","t | s"],"conclusion":"t","allowed_rules":["MP","MT","DS","HS","Simp","Conj","Add","CD","DN","DeM","Impl","Equiv"],"section":"training","optimal_length":6}
{"id":"train14","premises":["!(p | q) -> r","!p & !q","r -> s | t","!s","t -> w"],"conclusion":"w & !s","allowed_rules":["MP","MT","DS","HS","Simp","Conj","Add","CD","DN","DeM","Impl","Equiv"],"section":"training","optimal_length":6}
{"id":"train15","premises":["p & q","p | r -> s","s -> t","t & q -> u"],"conclusion":"u","allowed_rules":["MP","MT","DS","HS","Simp","Conj","Add","CD","DN","DeM","Impl","Equiv"],"section":"training","optimal_length":7}
{"id":"post1","premises":["!(p & q)","q","r -> p","!r -> s"],"conclusion":"s & q","allowed_rules":["MP","MT","DS","HS","Simp","Conj","Add","CD","DN","DeM","Impl","Equiv"],"section":"posttest","optimal_length":6}
{"id":"post2","premises":["p -> q","r -> s","!q & !s","t -> p | r"],"conclusion":"!t","allowed_rules":["MP","MT","DS","HS","Simp","Conj","Add","CD","DN","DeM","Impl","Equiv"],"section":"posttest","optimal_length":7}
{"id":"post3","premises":["p & q","p -> r | s","!r","q -> (s -> t)"],"conclusion":"t & q","allowed_rules":["MP","MT","DS","HS","Simp","Conj","Add","CD","DN","DeM","Impl","Equiv"],"section":"posttest","optimal_length":7}
{"id":"post4","premises":["p -> q","q -> r & s","p","s -> t","t & r -> u"],"conclusion":"u | w","allowed_rules":["MP","MT","DS","HS","Simp","Conj","Add","CD","DN","DeM","Impl","Equiv"],"section":"posttest","optimal_length":8}
{"id":"post5","premises":["p -> q","q -> r","r -> s & t","p","t -> w","s & w -> x"],"conclusion":"x","allowed_rules":["MP","MT","DS","HS","Simp","Conj","Add","CD","DN","DeM","Impl","Equiv"],"section":"posttest","optimal_length":8}
)jsonl";

}  // namespace detail

/// The 22 problems the simulator and the tutor service use by default:
/// 2 pretest, 15 training and 5 posttest problems.
inline const std::vector<Problem>& shipped_problems() {
  static const std::vector<Problem> problems = [] {
    std::istringstream in{std::string(detail::kShippedProblems)};
    return parse_problems(in, false);
  }();
  return problems;
}

inline std::vector<Problem> problems_in(const std::vector<Problem>& all, Section s) {
  std::vector<Problem> out;
  for (const Problem& p : all)
    if (p.section == s) out.push_back(p);
  return out;
}

inline const Problem* find_problem(const std::vector<Problem>& all, std::string_view id) {
  for (const Problem& p : all)
    if (p.id == id) return &p;
  return nullptr;
}

}  // namespace hnu
