#include "minidse/solver.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace minidse::solver {

using ast::Expr;
using ast::Kind;

std::string_view to_string(Status s) {
  switch (s) {
    case Status::Sat: return "sat";
    case Status::Unsat: return "unsat";
    case Status::Timeout: return "timeout";
  }
  return "?";
}

std::string to_dimacs(const Cnf& cnf) {
  std::string out = fmt::format("p cnf {} {}\n", cnf.num_vars, cnf.clauses.size());
  for (const auto& c : cnf.clauses) {
    for (int l : c) out += fmt::format("{} ", l);
    out += "0\n";
  }
  return out;
}

// --- bit-blasting ------------------------------------------------------------

namespace {

uint64_t pair_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 32) | static_cast<uint32_t>(b);
}

}  // namespace

BitBlaster::BitBlaster() {
  cnf_.num_vars = 1;
  cnf_.clauses.push_back({kTrue});
}

int BitBlaster::fresh() { return ++cnf_.num_vars; }

void BitBlaster::clause(std::initializer_list<int> lits) { cnf_.clauses.emplace_back(lits); }

int BitBlaster::gate_and(int a, int b) {
  if (a == kFalse || b == kFalse || a == -b) return kFalse;
  if (a == kTrue) return b;
  if (b == kTrue || a == b) return a;
  const uint64_t key = pair_key(a, b);
  if (auto it = and_cache_.find(key); it != and_cache_.end()) return it->second;
  const int x = fresh();
  clause({-x, a});
  clause({-x, b});
  clause({x, -a, -b});
  and_cache_.emplace(key, x);
  return x;
}

int BitBlaster::gate_xor(int a, int b) {
  if (a == kFalse) return b;
  if (b == kFalse) return a;
  if (a == kTrue) return -b;
  if (b == kTrue) return -a;
  if (a == b) return kFalse;
  if (a == -b) return kTrue;
  bool flip = false;
  if (a < 0) {
    a = -a;
    flip = !flip;
  }
  if (b < 0) {
    b = -b;
    flip = !flip;
  }
  const uint64_t key = pair_key(a, b);
  int x = 0;
  if (auto it = xor_cache_.find(key); it != xor_cache_.end()) {
    x = it->second;
  } else {
    x = fresh();
    clause({-x, a, b});
    clause({-x, -a, -b});
    clause({x, -a, b});
    clause({x, a, -b});
    xor_cache_.emplace(key, x);
  }
  return flip ? -x : x;
}

int BitBlaster::gate_mux(int s, int t, int e) {
  if (s == kTrue) return t;
  if (s == kFalse) return e;
  if (t == e) return t;
  if (t == kTrue && e == kFalse) return s;
  if (t == kFalse && e == kTrue) return -s;
  if (t == kTrue) return gate_or(s, e);
  if (t == kFalse) return gate_and(-s, e);
  if (e == kTrue) return gate_or(-s, t);
  if (e == kFalse) return gate_and(s, t);
  const int x = fresh();
  clause({-s, -t, x});
  clause({-s, t, -x});
  clause({s, -e, x});
  clause({s, e, -x});
  // redundant but helps propagation
  clause({-t, -e, x});
  clause({t, e, -x});
  return x;
}

BitBlaster::Bits BitBlaster::add(const Bits& a, const Bits& b, int carry) {
  Bits out(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    const int axb = gate_xor(a[i], b[i]);
    out[i] = gate_xor(axb, carry);
    if (i + 1 < a.size()) carry = gate_or(gate_and(a[i], b[i]), gate_and(carry, axb));
  }
  return out;
}

BitBlaster::Bits BitBlaster::mul(const Bits& a, const Bits& b) {
  const size_t w = a.size();
  Bits acc(w, kFalse);
  for (size_t i = 0; i < w; ++i) {
    if (b[i] == kFalse) continue;
    Bits partial(w, kFalse);
    for (size_t j = i; j < w; ++j) partial[j] = gate_and(a[j - i], b[i]);
    acc = add(acc, partial, kFalse);
  }
  return acc;
}

BitBlaster::Bits BitBlaster::shift(const Bits& a, const Bits& b, Kind kind) {
  const size_t w = a.size();
  const int fill = kind == Kind::AShr ? a[w - 1] : kFalse;
  Bits cur = a;
  int overflow = kFalse;
  for (size_t k = 0; k < w; ++k) {
    const bool in_range = k < 63 && (uint64_t{1} << k) < w;
    if (!in_range) {
      overflow = gate_or(overflow, b[k]);
      continue;
    }
    const size_t s = size_t{1} << k;
    Bits next(w);
    for (size_t j = 0; j < w; ++j) {
      int moved = fill;
      if (kind == Kind::Shl) {
        moved = j >= s ? cur[j - s] : kFalse;
      } else if (j + s < w) {
        moved = cur[j + s];
      }
      next[j] = gate_mux(b[k], moved, cur[j]);
    }
    cur = std::move(next);
  }
  if (overflow != kFalse) {
    for (auto& bit : cur) bit = gate_mux(overflow, fill, bit);
  }
  return cur;
}

int BitBlaster::equal(const Bits& a, const Bits& b) {
  int r = kTrue;
  for (size_t i = 0; i < a.size(); ++i) r = gate_and(r, -gate_xor(a[i], b[i]));
  return r;
}

int BitBlaster::less_than(const Bits& a, const Bits& b) {
  int lt = kFalse;
  for (size_t i = 0; i < a.size(); ++i) lt = gate_mux(gate_xor(a[i], b[i]), b[i], lt);
  return lt;
}

void BitBlaster::assert_true(Expr e) {
  if (!e->is_bool()) throw ast::TypeError("bit-blaster: constraint is not boolean");
  const int l = blast(e)[0];
  cnf_.clauses.push_back({l});
}

const BitBlaster::Bits& BitBlaster::blast(Expr e) {
  if (auto it = memo_.find(e); it != memo_.end()) return it->second;
  // Children first, iteratively, to keep deep terms off the call stack.
  std::vector<std::pair<Expr, size_t>> stack{{e, 0}};
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->num_children()) {
      Expr c = n->child(next++);
      if (!memo_.count(c)) stack.emplace_back(c, 0);
      continue;
    }
    Expr done = n;
    stack.pop_back();
    if (!memo_.count(done)) {
      Bits bits = blast_node(done);
      memo_.emplace(done, std::move(bits));
    }
  }
  return memo_.at(e);
}

BitBlaster::Bits BitBlaster::blast_node(Expr e) {
  const unsigned w = e->width();
  auto ch = [&](size_t i) -> const Bits& { return memo_.at(e->child(i)); };
  switch (e->kind()) {
    case Kind::Const: {
      Bits out(w);
      for (unsigned i = 0; i < w; ++i) out[i] = ((e->value() >> i) & 1U) ? kTrue : kFalse;
      return out;
    }
    case Kind::Var: {
      auto [it, inserted] = cnf_.bit_map.try_emplace(e->var_index());
      if (inserted) {
        for (auto& v : it->second) v = fresh();
      }
      return Bits(it->second.begin(), it->second.end());
    }
    case Kind::Concat: {
      Bits out;
      for (size_t i = e->num_children(); i-- > 0;) {
        const Bits& c = ch(i);
        out.insert(out.end(), c.begin(), c.end());
      }
      return out;
    }
    case Kind::Extract: {
      const Bits& a = ch(0);
      return Bits(a.begin() + e->low(), a.begin() + e->high() + 1);
    }
    case Kind::ZeroExtend:
    case Kind::SignExtend: {
      Bits out = ch(0);
      const int pad = e->kind() == Kind::ZeroExtend ? kFalse : out.back();
      out.resize(w, pad);
      return out;
    }
    case Kind::Add: return add(ch(0), ch(1), kFalse);
    case Kind::Sub: {
      Bits nb = ch(1);
      for (auto& b : nb) b = -b;
      return add(ch(0), nb, kTrue);
    }
    case Kind::Mul: return mul(ch(0), ch(1));
    case Kind::And:
    case Kind::Or:
    case Kind::Xor: {
      const Bits& a = ch(0);
      const Bits& b = ch(1);
      Bits out(w);
      for (unsigned i = 0; i < w; ++i) {
        out[i] = e->kind() == Kind::And  ? gate_and(a[i], b[i])
                 : e->kind() == Kind::Or ? gate_or(a[i], b[i])
                                         : gate_xor(a[i], b[i]);
      }
      return out;
    }
    case Kind::Not: {
      Bits out = ch(0);
      for (auto& b : out) b = -b;
      return out;
    }
    case Kind::Neg: {
      Bits na = ch(0);
      for (auto& b : na) b = -b;
      return add(na, Bits(w, kFalse), kTrue);
    }
    case Kind::Shl:
    case Kind::LShr:
    case Kind::AShr: return shift(ch(0), ch(1), e->kind());
    case Kind::Eq: return {equal(ch(0), ch(1))};
    case Kind::Ne: return {-equal(ch(0), ch(1))};
    case Kind::Ult: return {less_than(ch(0), ch(1))};
    case Kind::Ule: return {-less_than(ch(1), ch(0))};
    case Kind::Slt:
    case Kind::Sle: {
      // Flip the sign bits and compare unsigned.
      Bits a = ch(0);
      Bits b = ch(1);
      a.back() = -a.back();
      b.back() = -b.back();
      return {e->kind() == Kind::Slt ? less_than(a, b) : -less_than(b, a)};
    }
    case Kind::Ite: {
      const int s = ch(0)[0];
      const Bits& t = ch(1);
      const Bits& f = ch(2);
      Bits out(t.size());
      for (size_t i = 0; i < t.size(); ++i) out[i] = gate_mux(s, t[i], f[i]);
      return out;
    }
    case Kind::BoolAnd: return {gate_and(ch(0)[0], ch(1)[0])};
    case Kind::BoolOr: return {gate_or(ch(0)[0], ch(1)[0])};
    case Kind::BoolNot: return {-ch(0)[0]};
  }
  throw std::logic_error("bit-blaster: unhandled kind");
}

// --- CDCL ------------------------------------------------------------------------

namespace {

using Lit = uint32_t;  // 2*var + negated
constexpr Lit kNoLit = ~Lit{0};
constexpr int kNoReason = -1;

inline Lit mk_lit(int dimacs) {
  return dimacs > 0 ? static_cast<Lit>(2 * (dimacs - 1)) : static_cast<Lit>(2 * (-dimacs - 1) + 1);
}
inline Lit neg(Lit l) { return l ^ 1U; }
inline uint32_t var_of(Lit l) { return l >> 1; }
inline bool sign_of(Lit l) { return (l & 1U) != 0; }

enum : int8_t { kUndef = 0, kTrueV = 1, kFalseV = -1 };

struct Clause {
  std::vector<Lit> lits;
  bool learnt = false;
  bool deleted = false;
  double activity = 0;
};

struct Watcher {
  int cref;
  Lit blocker;
};

class VarHeap {
 public:
  explicit VarHeap(const std::vector<double>& act) : act_(act) {}
  void init(uint32_t n) {
    pos_.assign(n, -1);
    heap_.clear();
    for (uint32_t v = 0; v < n; ++v) insert(v);
  }
  bool empty() const { return heap_.empty(); }
  bool contains(uint32_t v) const { return pos_[v] >= 0; }
  void insert(uint32_t v) {
    if (contains(v)) return;
    pos_[v] = static_cast<int>(heap_.size());
    heap_.push_back(v);
    up(heap_.size() - 1);
  }
  void increased(uint32_t v) {
    if (contains(v)) up(static_cast<size_t>(pos_[v]));
  }
  uint32_t pop() {
    const uint32_t top = heap_[0];
    heap_[0] = heap_.back();
    pos_[heap_[0]] = 0;
    heap_.pop_back();
    pos_[top] = -1;
    if (!heap_.empty()) down(0);
    return top;
  }

 private:
  bool better(uint32_t a, uint32_t b) const { return act_[a] > act_[b] || (act_[a] == act_[b] && a < b); }
  void up(size_t i) {
    const uint32_t v = heap_[i];
    while (i > 0) {
      const size_t p = (i - 1) / 2;
      if (!better(v, heap_[p])) break;
      heap_[i] = heap_[p];
      pos_[heap_[i]] = static_cast<int>(i);
      i = p;
    }
    heap_[i] = v;
    pos_[v] = static_cast<int>(i);
  }
  void down(size_t i) {
    const uint32_t v = heap_[i];
    for (;;) {
      size_t c = 2 * i + 1;
      if (c >= heap_.size()) break;
      if (c + 1 < heap_.size() && better(heap_[c + 1], heap_[c])) ++c;
      if (!better(heap_[c], v)) break;
      heap_[i] = heap_[c];
      pos_[heap_[i]] = static_cast<int>(i);
      i = c;
    }
    heap_[i] = v;
    pos_[v] = static_cast<int>(i);
  }

  const std::vector<double>& act_;
  std::vector<uint32_t> heap_;
  std::vector<int> pos_;
};

}  // namespace

struct SatSolver::Impl {
  uint32_t nvars = 0;
  std::vector<Clause> clauses;
  std::vector<std::vector<Watcher>> watches;  // indexed by the literal that became false
  std::vector<int8_t> assigns;
  std::vector<int> level;
  std::vector<int> reason;
  std::vector<bool> phase;
  std::vector<double> activity;
  std::vector<uint8_t> seen;
  std::vector<Lit> trail;
  std::vector<size_t> trail_lim;
  size_t qhead = 0;
  VarHeap heap{activity};
  double var_inc = 1.0;
  double cla_inc = 1.0;
  size_t num_learnts = 0;
  double max_learnts = 0;
  bool unsat = false;
  SatStats* stats = nullptr;

  int8_t value(Lit l) const {
    const int8_t v = assigns[var_of(l)];
    return sign_of(l) ? static_cast<int8_t>(-v) : v;
  }
  int decision_level() const { return static_cast<int>(trail_lim.size()); }

  void enqueue(Lit l, int from) {
    const uint32_t v = var_of(l);
    assigns[v] = sign_of(l) ? kFalseV : kTrueV;
    level[v] = decision_level();
    reason[v] = from;
    trail.push_back(l);
  }

  void attach(int cref) {
    const Clause& c = clauses[static_cast<size_t>(cref)];
    watches[c.lits[0]].push_back({cref, c.lits[1]});
    watches[c.lits[1]].push_back({cref, c.lits[0]});
  }

  void add_input_clause(std::vector<Lit> lits) {
    if (unsat) return;
    std::sort(lits.begin(), lits.end());
    lits.erase(std::unique(lits.begin(), lits.end()), lits.end());
    std::vector<Lit> kept;
    for (size_t i = 0; i < lits.size(); ++i) {
      if (i + 1 < lits.size() && lits[i + 1] == neg(lits[i])) return;  // tautology
      const int8_t v = value(lits[i]);
      if (v == kTrueV) return;
      if (v == kUndef) kept.push_back(lits[i]);
    }
    if (kept.empty()) {
      unsat = true;
      return;
    }
    if (kept.size() == 1) {
      enqueue(kept[0], kNoReason);
      if (propagate() != kNoReason) unsat = true;
      return;
    }
    clauses.push_back({std::move(kept), false, false, 0});
    attach(static_cast<int>(clauses.size() - 1));
  }

  int propagate() {
    int confl = kNoReason;
    while (qhead < trail.size()) {
      const Lit p = trail[qhead++];
      const Lit false_lit = neg(p);
      auto& ws = watches[false_lit];
      ++stats->propagations;
      size_t i = 0, j = 0;
      while (i < ws.size()) {
        const Watcher w = ws[i];
        if (value(w.blocker) == kTrueV) {
          ws[j++] = ws[i++];
          continue;
        }
        Clause& c = clauses[static_cast<size_t>(w.cref)];
        if (c.deleted) {
          ++i;
          continue;
        }
        if (c.lits[0] == false_lit) std::swap(c.lits[0], c.lits[1]);
        ++i;
        const Lit first = c.lits[0];
        const Watcher nw{w.cref, first};
        if (first != w.blocker && value(first) == kTrueV) {
          ws[j++] = nw;
          continue;
        }
        bool moved = false;
        for (size_t k = 2; k < c.lits.size(); ++k) {
          if (value(c.lits[k]) != kFalseV) {
            std::swap(c.lits[1], c.lits[k]);
            watches[c.lits[1]].push_back(nw);
            moved = true;
            break;
          }
        }
        if (moved) continue;
        ws[j++] = nw;
        if (value(first) == kFalseV) {
          confl = w.cref;
          qhead = trail.size();
          while (i < ws.size()) ws[j++] = ws[i++];
        } else {
          enqueue(first, w.cref);
        }
      }
      ws.resize(j);
      if (confl != kNoReason) break;
    }
    return confl;
  }

  void bump_var(uint32_t v) {
    if ((activity[v] += var_inc) > 1e100) {
      for (auto& a : activity) a *= 1e-100;
      var_inc *= 1e-100;
    }
    heap.increased(v);
  }

  void bump_clause(Clause& c) {
    if ((c.activity += cla_inc) > 1e20) {
      for (auto& cl : clauses) {
        if (cl.learnt) cl.activity *= 1e-20;
      }
      cla_inc *= 1e-20;
    }
  }

  bool redundant(Lit l) const {
    // Local minimisation: implied only by literals already in the clause.
    const int r = reason[var_of(l)];
    if (r == kNoReason) return false;
    const Clause& c = clauses[static_cast<size_t>(r)];
    for (size_t k = 1; k < c.lits.size(); ++k) {
      const uint32_t v = var_of(c.lits[k]);
      if (!seen[v] && level[v] > 0) return false;
    }
    return true;
  }

  void analyze(int confl, std::vector<Lit>& learnt, int& bt_level) {
    learnt.assign(1, kNoLit);
    int path = 0;
    Lit p = kNoLit;
    size_t idx = trail.size();
    do {
      Clause& c = clauses[static_cast<size_t>(confl)];
      if (c.learnt) bump_clause(c);
      for (size_t k = (p == kNoLit ? 0 : 1); k < c.lits.size(); ++k) {
        const Lit q = c.lits[k];
        const uint32_t v = var_of(q);
        if (seen[v] || level[v] == 0) continue;
        seen[v] = 1;
        bump_var(v);
        if (level[v] >= decision_level()) {
          ++path;
        } else {
          learnt.push_back(q);
        }
      }
      while (!seen[var_of(trail[--idx])]) {
      }
      p = trail[idx];
      confl = reason[var_of(p)];
      seen[var_of(p)] = 0;
      --path;
    } while (path > 0);
    learnt[0] = neg(p);

    std::vector<Lit> all = learnt;
    size_t keep = 1;
    for (size_t k = 1; k < learnt.size(); ++k) {
      if (!redundant(learnt[k])) learnt[keep++] = learnt[k];
    }
    learnt.resize(keep);
    for (Lit l : all) seen[var_of(l)] = 0;

    bt_level = 0;
    if (learnt.size() > 1) {
      size_t best = 1;
      for (size_t k = 2; k < learnt.size(); ++k) {
        if (level[var_of(learnt[k])] > level[var_of(learnt[best])]) best = k;
      }
      std::swap(learnt[1], learnt[best]);
      bt_level = level[var_of(learnt[1])];
    }
  }

  void backtrack(int lvl) {
    if (decision_level() <= lvl) return;
    for (size_t k = trail.size(); k-- > trail_lim[static_cast<size_t>(lvl)];) {
      const uint32_t v = var_of(trail[k]);
      phase[v] = !sign_of(trail[k]);
      assigns[v] = kUndef;
      reason[v] = kNoReason;
      heap.insert(v);
    }
    trail.resize(trail_lim[static_cast<size_t>(lvl)]);
    trail_lim.resize(static_cast<size_t>(lvl));
    qhead = trail.size();
  }

  bool locked(int cref) const {
    const Clause& c = clauses[static_cast<size_t>(cref)];
    const uint32_t v = var_of(c.lits[0]);
    return reason[v] == cref && value(c.lits[0]) == kTrueV;
  }

  void reduce_db() {
    std::vector<int> cands;
    for (size_t i = 0; i < clauses.size(); ++i) {
      const Clause& c = clauses[i];
      if (c.learnt && !c.deleted && c.lits.size() > 2 && !locked(static_cast<int>(i))) {
        cands.push_back(static_cast<int>(i));
      }
    }
    std::sort(cands.begin(), cands.end(), [&](int a, int b) {
      const auto& ca = clauses[static_cast<size_t>(a)];
      const auto& cb = clauses[static_cast<size_t>(b)];
      return ca.activity < cb.activity || (ca.activity == cb.activity && a < b);
    });
    for (size_t k = 0; k < cands.size() / 2; ++k) {
      Clause& c = clauses[static_cast<size_t>(cands[k])];
      c.deleted = true;
      c.lits.clear();
      c.lits.shrink_to_fit();
      --num_learnts;
    }
  }

  Lit pick_branch() {
    while (!heap.empty()) {
      const uint32_t v = heap.pop();
      if (assigns[v] == kUndef) return 2 * v + (phase[v] ? 0U : 1U);
    }
    return kNoLit;
  }

  Status search(std::chrono::steady_clock::time_point deadline) {
    if (unsat) return Status::Unsat;
    if (propagate() != kNoReason) return Status::Unsat;
    max_learnts = std::max(100.0, static_cast<double>(clauses.size()) / 3.0);
    double restart_limit = 100;
    uint64_t since_restart = 0;
    std::vector<Lit> learnt;
    for (;;) {
      const int confl = propagate();
      if (confl != kNoReason) {
        ++stats->conflicts;
        ++since_restart;
        if (decision_level() == 0) return Status::Unsat;
        int bt = 0;
        analyze(confl, learnt, bt);
        backtrack(bt);
        if (learnt.size() == 1) {
          enqueue(learnt[0], kNoReason);
        } else {
          clauses.push_back({learnt, true, false, 0});
          const int cref = static_cast<int>(clauses.size() - 1);
          bump_clause(clauses.back());
          attach(cref);
          enqueue(learnt[0], cref);
          ++num_learnts;
        }
        var_inc /= 0.95;
        cla_inc /= 0.999;
        if ((stats->conflicts & 63U) == 0 && std::chrono::steady_clock::now() >= deadline) return Status::Timeout;
        continue;
      }
      if (static_cast<double>(since_restart) >= restart_limit) {
        ++stats->restarts;
        since_restart = 0;
        restart_limit *= 1.5;
        max_learnts *= 1.1;
        backtrack(0);
        if (std::chrono::steady_clock::now() >= deadline) return Status::Timeout;
      }
      if (static_cast<double>(num_learnts) - static_cast<double>(trail.size()) >= max_learnts) reduce_db();
      const Lit next = pick_branch();
      if (next == kNoLit) return Status::Sat;
      ++stats->decisions;
      if ((stats->decisions & 1023U) == 0 && std::chrono::steady_clock::now() >= deadline) return Status::Timeout;
      trail_lim.push_back(trail.size());
      enqueue(next, kNoReason);
    }
  }
};

SatSolver::SatSolver(const Cnf& cnf, uint64_t seed) : impl_(new Impl) {
  Impl& s = *impl_;
  s.stats = &stats_;
  s.nvars = static_cast<uint32_t>(cnf.num_vars);
  s.watches.resize(2 * static_cast<size_t>(s.nvars));
  s.assigns.assign(s.nvars, kUndef);
  s.level.assign(s.nvars, 0);
  s.reason.assign(s.nvars, kNoReason);
  s.activity.assign(s.nvars, 0.0);
  s.seen.assign(s.nvars, 0);
  s.phase.resize(s.nvars);
  std::mt19937_64 rng(seed);
  for (uint32_t v = 0; v < s.nvars; ++v) s.phase[v] = (rng() & 1U) != 0;
  s.heap.init(s.nvars);
  for (const auto& c : cnf.clauses) {
    std::vector<Lit> lits;
    lits.reserve(c.size());
    for (int l : c) {
      if (l == 0 || std::abs(l) > cnf.num_vars) throw std::invalid_argument("CNF literal out of range");
      lits.push_back(mk_lit(l));
    }
    s.add_input_clause(std::move(lits));
  }
}

SatSolver::~SatSolver() { delete impl_; }

Status SatSolver::solve(std::chrono::steady_clock::time_point deadline) { return impl_->search(deadline); }

bool SatSolver::value(int v) const { return impl_->assigns[static_cast<size_t>(v - 1)] == kTrueV; }

// --- facade --------------------------------------------------------------------

SolveResult solve(std::span<const Expr> constraints, const SolveOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  const auto deadline = start + std::chrono::milliseconds(opts.timeout_ms);
  BitBlaster bb;
  for (Expr c : constraints) bb.assert_true(c);
  const Cnf& cnf = bb.cnf();
  if (!opts.dimacs_path.empty()) {
    std::ofstream out(opts.dimacs_path);
    out << to_dimacs(cnf);
  }

  SolveResult res;
  res.cnf_vars = cnf.num_vars;
  res.cnf_clauses = cnf.clauses.size();
  SatSolver sat(cnf, opts.seed);
  res.status = sat.solve(deadline);
  res.stats = sat.stats();
  if (res.status == Status::Sat) {
    for (const auto& [byte, bits] : cnf.bit_map) {
      uint8_t v = 0;
      for (unsigned i = 0; i < 8; ++i) {
        if (sat.value(bits[i])) v = static_cast<uint8_t>(v | (1U << i));
      }
      res.model.set(byte, v);
    }
    for (Expr c : constraints) {
      if (ast::eval(c, res.model) != 1) {
        throw std::logic_error(fmt::format("solver model violates {}", ast::to_smtlib(c)));
      }
    }
  }
  res.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace minidse::solver
