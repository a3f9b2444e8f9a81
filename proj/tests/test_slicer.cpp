#include "doctest.h"

#include <algorithm>
#include <random>
#include <set>

#include "minidse/slicer.hpp"
#include "minidse/symex.hpp"
#include "support.hpp"

using namespace minidse;
using ast::Expr;

namespace {

// Reachability over the "shares a variable" graph, by repeated scanning.
std::vector<size_t> closure_oracle(Expr cond, const std::vector<Expr>& prefix) {
  std::vector<bool> in(prefix.size(), false);
  std::vector<bool> var_in(64, false);
  for (uint32_t v : cond->used_vars().to_vector()) var_in[v] = true;
  bool grew = true;
  while (grew) {
    grew = false;
    for (size_t i = 0; i < prefix.size(); ++i) {
      if (in[i]) continue;
      const auto vs = prefix[i]->used_vars().to_vector();
      if (std::any_of(vs.begin(), vs.end(), [&](uint32_t v) { return var_in[v]; })) {
        in[i] = true;
        for (uint32_t v : vs) var_in[v] = true;
        grew = true;
      }
    }
  }
  std::vector<size_t> out;
  for (size_t i = 0; i < prefix.size(); ++i) {
    if (in[i]) out.push_back(i);
  }
  return out;
}

Expr over(ast::ExprFactory& f, std::initializer_list<uint32_t> vars) {
  Expr sum = f.constant(8, 0);
  for (uint32_t v : vars) sum = f.add(sum, f.var(v));
  return f.ne(sum, f.constant(8, 0x77));
}

uint64_t jcc_after(const Program& p, const std::string& label) {
  for (uint64_t a = p.label(label); a < p.code_end(); a += kInsnSize) {
    if (is_conditional_jump(p.at(a)->opcode)) return a;
  }
  return 0;
}

}  // namespace

TEST_SUITE("slicer") {

TEST_CASE("independent constraints are dropped") {
  ast::ExprFactory f;
  const std::vector<Expr> prefix{over(f, {1}), over(f, {2})};
  const auto q = slicer::slice(over(f, {0}), prefix);
  CHECK(q.kept.empty());
  CHECK(q.vars == ast::VarSet{0});
}

TEST_CASE("chains are followed") {
  ast::ExprFactory f;
  const std::vector<Expr> prefix{over(f, {0, 1}), over(f, {1, 2})};
  const auto q = slicer::slice(over(f, {2}), prefix);
  CHECK(q.kept == std::vector<size_t>{0, 1});
  CHECK(q.vars == (ast::VarSet{0, 1, 2}));
  CHECK(closure_oracle(over(f, {2}), prefix) == q.kept);
}

TEST_CASE("fixpoint, union-find and closure oracle agree") {
  std::mt19937 rng(17);
  for (int round = 0; round < 500; ++round) {
    ast::ExprFactory f;
    const unsigned nvars = 4 + rng() % 40;
    std::vector<Expr> prefix;
    for (unsigned n = rng() % 30; n > 0; --n) {
      Expr sum = f.var(rng() % nvars);
      for (unsigned k = rng() % 3; k > 0; --k) sum = f.bvxor(sum, f.var(rng() % nvars));
      prefix.push_back(f.ult(sum, f.constant(8, 1 + rng() % 200)));
    }
    const Expr cond = f.eq(f.var(rng() % nvars), f.constant(8, 3));
    const auto a = slicer::slice(cond, prefix);
    const auto b = slicer::slice_grouped(cond, prefix);
    const auto want = closure_oracle(cond, prefix);
    CHECK(a.kept == want);
    CHECK(b.kept == want);
    CHECK(a.vars == b.vars);
  }
}

TEST_CASE("model completion") {
  const std::vector<uint8_t> seed(24, 0);
  CHECK(slicer::complete_model({}, seed) == seed);
  ast::Assignment m;
  m.set(4, 0x41);
  auto out = slicer::complete_model(m, seed);
  auto want = seed;
  want[4] = 0x41;
  CHECK(out == want);
  m.set(30, 1);
  CHECK_THROWS_AS(slicer::complete_model(m, seed), std::out_of_range);
}

TEST_CASE("slicing port, line-15 inversion") {
  const Program p = testing::load_sample("slicing");
  const std::vector<uint8_t> seed(24, 0);
  ast::ExprFactory f;
  const auto tr = symex::trace_and_build(p, seed, f, {}, {});
  size_t idx = tr.predicate.size();
  for (size_t i = 0; i < tr.predicate.size(); ++i) {
    if (tr.predicate[i].site == jcc_after(p, "line15")) idx = i;
  }
  REQUIRE(idx < tr.predicate.size());
  const auto prefix = std::span<const symex::PathConstraint>(tr.predicate).first(idx);
  const auto q = slicer::slice(f.lnot(tr.predicate[idx].cond), prefix);
  std::set<uint64_t> kept_sites;
  for (size_t k : q.kept) kept_sites.insert(tr.predicate[k].site);
  std::set<uint64_t> want;
  for (const char* l : {"line11", "line12", "line13", "line14"}) want.insert(jcc_after(p, l));
  CHECK(kept_sites == want);
  CHECK(slicer::keep_all(tr.predicate[idx].cond, prefix).kept.size() == idx);
}

}
