#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "minidse/expr.hpp"

namespace minidse::solver {

inline constexpr uint32_t kDefaultTimeoutMs = 5000;

/// CNF in DIMACS literal convention (variables from 1, negative = negated).
/// Variable 1 is pinned true by a unit clause.
struct Cnf {
  int num_vars = 0;
  std::vector<std::vector<int>> clauses;
  /// bit_map[byte] = variables of bits 0..7 (0 when the byte is unused).
  std::unordered_map<uint32_t, std::array<int, 8>> bit_map;
};

std::string to_dimacs(const Cnf& cnf);

/// Tseitin bit-blaster.  Shared subterms are encoded once.
class BitBlaster {
 public:
  BitBlaster();

  /// Asserts a boolean term.  Throws ast::TypeError for bitvector terms.
  void assert_true(ast::Expr e);
  const Cnf& cnf() const { return cnf_; }
  Cnf take() { return std::move(cnf_); }

  using Bits = std::vector<int>;  // LSB first

 private:
  static constexpr int kTrue = 1;
  static constexpr int kFalse = -1;

  int fresh();
  void clause(std::initializer_list<int> lits);
  int gate_and(int a, int b);
  int gate_or(int a, int b) { return -gate_and(-a, -b); }
  int gate_xor(int a, int b);
  int gate_mux(int s, int t, int e);

  Bits add(const Bits& a, const Bits& b, int carry_in);
  Bits mul(const Bits& a, const Bits& b);
  Bits shift(const Bits& a, const Bits& b, ast::Kind kind);
  int equal(const Bits& a, const Bits& b);
  int less_than(const Bits& a, const Bits& b);

  const Bits& blast(ast::Expr e);
  Bits blast_node(ast::Expr e);

  Cnf cnf_;
  std::unordered_map<ast::Expr, Bits> memo_;
  std::unordered_map<uint64_t, int> and_cache_;
  std::unordered_map<uint64_t, int> xor_cache_;
};

enum class Status { Sat, Unsat, Timeout };
std::string_view to_string(Status s);

struct SatStats {
  uint64_t decisions = 0;
  uint64_t conflicts = 0;
  uint64_t propagations = 0;
  uint64_t restarts = 0;
};

/// CDCL core: two watched literals, first-UIP learning, VSIDS, phase
/// saving (initial phases drawn from `seed`), geometric restarts and
/// learnt-clause reduction.
class SatSolver {
 public:
  SatSolver(const Cnf& cnf, uint64_t seed);
  ~SatSolver();
  SatSolver(const SatSolver&) = delete;
  SatSolver& operator=(const SatSolver&) = delete;

  Status solve(std::chrono::steady_clock::time_point deadline);
  /// Value of DIMACS variable `v` in the model (after Sat).
  bool value(int v) const;
  const SatStats& stats() const { return stats_; }

 private:
  struct Impl;
  Impl* impl_;
  SatStats stats_;
};

struct SolveOptions {
  uint32_t timeout_ms = kDefaultTimeoutMs;
  uint64_t seed = 0;
  std::string dimacs_path;  ///< dump the CNF here when non-empty
};

struct SolveResult {
  Status status = Status::Unsat;
  ast::Assignment model;
  SatStats stats;
  double ms = 0;
  int cnf_vars = 0;
  size_t cnf_clauses = 0;
};

/// Bit-blasts and solves the conjunction.  A Sat model is checked against
/// every constraint with ast::eval; a failing check throws std::logic_error.
SolveResult solve(std::span<const ast::Expr> constraints, const SolveOptions& opts = {});

}  // namespace minidse::solver
