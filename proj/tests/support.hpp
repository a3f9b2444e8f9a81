#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "minidse/expr.hpp"
#include "minidse/program.hpp"

namespace testing {

inline std::string sample_path(const std::string& name) {
  return (std::filesystem::path(MINIDSE_SAMPLES_DIR) / name).string();
}

inline minidse::Program load_sample(const std::string& stem) {
  return minidse::assemble_file(sample_path(stem + ".masm"));
}

inline std::vector<uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<uint8_t> sample_seed(const std::string& stem) { return read_bytes(sample_path(stem + ".seed")); }

/// Samples shipped with a seed file, in directory order.
inline std::vector<std::string> sample_stems() {
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(MINIDSE_SAMPLES_DIR)) {
    if (e.path().extension() != ".masm") continue;
    auto seed = e.path();
    seed.replace_extension(".seed");
    if (std::filesystem::exists(seed)) out.push_back(e.path().stem().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Random expression recipes.  A recipe is built once and then materialized
// in several factories, so the raw and simplified forms have the same shape.
struct Recipe {
  minidse::ast::Kind kind = minidse::ast::Kind::Const;
  unsigned width = 8;
  uint64_t value = 0;  // Const value or Var index
  unsigned p0 = 0, p1 = 0;
  std::vector<std::shared_ptr<Recipe>> kids;
};
using RecipePtr = std::shared_ptr<Recipe>;

class RecipeGen {
 public:
  RecipeGen(uint64_t seed, unsigned num_vars) : rng_(seed), num_vars_(num_vars) {}

  RecipePtr bv(unsigned width, unsigned depth);
  RecipePtr boolean(unsigned depth);

 private:
  using K = minidse::ast::Kind;
  unsigned pick(unsigned n) { return std::uniform_int_distribution<unsigned>(0, n - 1)(rng_); }
  bool chance(double p) { return std::uniform_real_distribution<double>(0, 1)(rng_) < p; }
  RecipePtr node(K k, unsigned w, std::vector<RecipePtr> kids, unsigned p0 = 0, unsigned p1 = 0) {
    auto r = std::make_shared<Recipe>();
    r->kind = k;
    r->width = w;
    r->kids = std::move(kids);
    r->p0 = p0;
    r->p1 = p1;
    return r;
  }
  RecipePtr constant(unsigned w);
  RecipePtr leaf(unsigned w);

  std::mt19937_64 rng_;
  unsigned num_vars_;
};

inline RecipePtr RecipeGen::constant(unsigned w) {
  const uint64_t mask = w >= 64 ? ~uint64_t{0} : (uint64_t{1} << w) - 1;
  uint64_t v = 0;
  switch (pick(5)) {
    case 0: v = 0; break;
    case 1: v = 1; break;
    case 2: v = mask; break;
    default: v = rng_() & mask; break;
  }
  auto r = node(K::Const, w, {});
  r->value = v;
  return r;
}

inline RecipePtr RecipeGen::leaf(unsigned w) {
  if (chance(0.3)) return constant(w);
  auto v = node(K::Var, 8, {});
  v->value = pick(num_vars_);
  if (w == 8) return v;
  if (w > 8) return node(chance(0.5) ? K::ZeroExtend : K::SignExtend, w, {v}, w - 8);
  return node(K::Extract, w, {v}, w - 1, 0);
}

inline RecipePtr RecipeGen::bv(unsigned w, unsigned depth) {
  if (depth == 0 || chance(0.15)) return leaf(w);
  const unsigned d = depth - 1;
  switch (pick(12)) {
    case 0:
    case 1:
    case 2: {
      static constexpr K ops[] = {K::Add, K::Sub, K::Mul, K::And, K::Or, K::Xor, K::Shl, K::LShr, K::AShr};
      const K k = ops[pick(9)];
      auto a = bv(w, d);
      // identical operands and zero operands exercise the rewrite rules
      if (chance(0.25)) return node(k, w, {a, a});
      if (chance(0.15)) return node(k, w, {constant(w), a});
      return node(k, w, {a, bv(w, d)});
    }
    case 3: return node(chance(0.5) ? K::Not : K::Neg, w, {bv(w, d)});
    case 4:
    case 5: {  // extract from a wider term, sometimes nested
      const unsigned wider = std::min(64U, w + 1 + pick(24));
      const unsigned low = pick(wider - w + 1);
      auto inner = bv(wider, d);
      if (chance(0.3) && wider < 64) {
        const unsigned w2 = std::min(64U, wider + 8);
        inner = node(K::Extract, wider, {bv(w2, d ? d - 1 : 0)}, wider - 1 + (w2 - wider) / 2, (w2 - wider) / 2);
      }
      return node(K::Extract, w, {inner}, low + w - 1, low);
    }
    case 6:
    case 7: {  // concat, often of byte extracts of one base
      if (w < 2) return leaf(w);
      if (w % 8 == 0 && w >= 16 && chance(0.5)) {
        auto base = bv(std::min(64U, w + 8 * pick(2)), d);
        std::vector<RecipePtr> parts;
        for (unsigned hi = w; hi >= 8; hi -= 8) parts.push_back(node(K::Extract, 8, {base}, hi - 1, hi - 8));
        return node(K::Concat, w, std::move(parts));
      }
      const unsigned hi_w = 1 + pick(w - 1);
      return node(K::Concat, w, {bv(hi_w, d), bv(w - hi_w, d)});
    }
    case 8:
    case 9: {
      if (w < 2) return leaf(w);
      const unsigned inner = 1 + pick(w - 1);
      return node(chance(0.5) ? K::ZeroExtend : K::SignExtend, w, {bv(inner, d)}, w - inner);
    }
    case 10: return node(K::Ite, w, {boolean(d), bv(w, d), bv(w, d)});
    default: return leaf(w);
  }
}

inline RecipePtr RecipeGen::boolean(unsigned depth) {
  if (depth == 0) {
    static constexpr unsigned widths[] = {1, 4, 8, 16, 32};
    const unsigned w = widths[pick(5)];
    return node(K::Ult, 1, {leaf(w), leaf(w)});
  }
  const unsigned d = depth - 1;
  switch (pick(4)) {
    case 0: {
      static constexpr unsigned widths[] = {1, 3, 8, 12, 16, 24, 32, 64};
      const unsigned w = widths[pick(8)];
      static constexpr K cmps[] = {K::Eq, K::Ne, K::Ult, K::Ule, K::Slt, K::Sle};
      return node(cmps[pick(6)], 1, {bv(w, d), bv(w, d)});
    }
    case 1: return node(K::BoolAnd, 1, {boolean(d), boolean(d)});
    case 2: return node(K::BoolOr, 1, {boolean(d), boolean(d)});
    default: return node(K::BoolNot, 1, {boolean(d)});
  }
}

/// `remap`, when given, renames recipe variable i to remap[i].
inline minidse::ast::Expr materialize(const RecipePtr& r, minidse::ast::ExprFactory& f,
                                      const std::vector<uint32_t>* remap = nullptr) {
  using K = minidse::ast::Kind;
  if (r->kind == K::Const) return f.constant(r->width, r->value);
  if (r->kind == K::Var) return f.var(remap ? (*remap)[r->value] : static_cast<uint32_t>(r->value));
  std::vector<minidse::ast::Expr> kids;
  kids.reserve(r->kids.size());
  for (const auto& k : r->kids) kids.push_back(materialize(k, f, remap));
  return f.mk(r->kind, kids, r->p0, r->p1);
}

/// The listed rewrite examples: `got` is built through the simplifying
/// constructors, `want` is the expected right-hand side.  A and x are opaque
/// (Add-rooted) terms so no other rule touches them.
struct RewriteCase {
  std::string name;
  minidse::ast::Expr got;
  minidse::ast::Expr want;
};

inline std::vector<RewriteCase> rewrite_cases(minidse::ast::ExprFactory& f) {
  using minidse::ast::Expr;
  auto wide = [&](unsigned w, uint32_t v0, uint32_t v1) { return f.add(f.zext(w - 8, f.var(v0)), f.zext(w - 8, f.var(v1))); };
  const Expr a8 = f.add(f.var(0), f.var(1));
  const Expr a32 = wide(32, 2, 3);
  const Expr a64 = wide(64, 4, 5);
  const Expr x32 = wide(32, 6, 7);
  const Expr zero8 = f.constant(8, 0);
  std::vector<RewriteCase> out;
  out.push_back({"A & A -> A", f.bvand(a8, a8), a8});
  out.push_back({"A | A -> A", f.bvor(a8, a8), a8});
  out.push_back({"A ^ A -> 0", f.bvxor(a8, a8), zero8});
  out.push_back({"A - A -> 0", f.sub(a8, a8), zero8});
  out.push_back({"0 * A -> 0", f.mul(zero8, a8), zero8});
  out.push_back({"0 & A -> 0", f.bvand(zero8, a8), zero8});
  out.push_back({"0 << A -> 0", f.shl(zero8, a8), zero8});
  out.push_back({"0 >> A -> 0", f.lshr(zero8, a8), zero8});
  out.push_back({"extract of extract", f.extract(7, 4, f.extract(23, 8, a32)), f.extract(15, 12, a32)});
  // named 8-bit limbs bv1..bv4 stand for the four concatenated bytes
  const Expr bv1 = f.var(8), bv2 = f.var(9), bv3 = f.var(10), bv4 = f.var(11);
  out.push_back({"extract of concat", f.extract(11, 9, f.concat({bv1, bv2, bv3, bv4})), f.extract(3, 1, bv3)});
  out.push_back({"concat of extracts",
                 f.concat({f.extract(31, 24, a64), f.extract(23, 16, a64), f.extract(15, 8, a64), f.extract(7, 0, a64)}),
                 f.extract(31, 0, a64)});
  out.push_back({"extract of zero extend", f.extract(31, 0, f.zext(32, x32)), x32});
  return out;
}

/// Dense assignment for byte variables 0..n-1 taken from the bits of `x`.
inline minidse::ast::Assignment assignment_from(uint64_t x, unsigned n) {
  minidse::ast::Assignment a;
  for (unsigned i = 0; i < n; ++i) a.set(i, static_cast<uint8_t>(x >> (8 * i)));
  return a;
}

}  // namespace testing
