#include "minidse/expr.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <functional>
#include <unordered_map>

namespace minidse::ast {

namespace {

constexpr std::array<std::string_view, 27> kKindNames = {
    "const", "var",  "concat", "extract", "zero_extend", "sign_extend", "bvadd", "bvsub", "bvmul",
    "bvand", "bvor", "bvxor",  "bvnot",   "bvneg",       "bvshl",       "bvlshr", "bvashr", "=",
    "distinct", "bvult", "bvule", "bvslt", "bvsle", "ite", "and", "or", "not",
};

uint64_t mask_of(unsigned width) { return width >= 64 ? ~uint64_t{0} : (uint64_t{1} << width) - 1; }

int64_t to_signed(uint64_t v, unsigned width) {
  if (width >= 64) return static_cast<int64_t>(v);
  const uint64_t sign = uint64_t{1} << (width - 1);
  return static_cast<int64_t>((v ^ sign) - sign);
}

/// Applies one operator to already-evaluated children.
uint64_t apply(Kind kind, unsigned width, unsigned p0, unsigned p1, const uint64_t* v, const uint8_t* w,
               size_t n) {
  const uint64_t m = mask_of(width);
  switch (kind) {
    case Kind::Const:
    case Kind::Var:
      return 0;  // leaves handled by callers
    case Kind::Concat: {
      uint64_t acc = 0;
      for (size_t i = 0; i < n; ++i) acc = (w[i] >= 64 ? 0 : acc << w[i]) | v[i];
      return acc & m;
    }
    case Kind::Extract: return (v[0] >> p1) & mask_of(p0 - p1 + 1);
    case Kind::ZeroExtend: return v[0];
    case Kind::SignExtend: return static_cast<uint64_t>(to_signed(v[0], w[0])) & m;
    case Kind::Add: return (v[0] + v[1]) & m;
    case Kind::Sub: return (v[0] - v[1]) & m;
    case Kind::Mul: return (v[0] * v[1]) & m;
    case Kind::And: return v[0] & v[1];
    case Kind::Or: return v[0] | v[1];
    case Kind::Xor: return v[0] ^ v[1];
    case Kind::Not: return ~v[0] & m;
    case Kind::Neg: return (0 - v[0]) & m;
    case Kind::Shl: return v[1] >= width ? 0 : (v[0] << v[1]) & m;
    case Kind::LShr: return v[1] >= width ? 0 : v[0] >> v[1];
    case Kind::AShr: {
      const int64_t s = to_signed(v[0], width);
      const uint64_t amount = std::min<uint64_t>(v[1], width - 1);
      return static_cast<uint64_t>(s >> amount) & m;
    }
    case Kind::Eq: return v[0] == v[1];
    case Kind::Ne: return v[0] != v[1];
    case Kind::Ult: return v[0] < v[1];
    case Kind::Ule: return v[0] <= v[1];
    case Kind::Slt: return to_signed(v[0], w[0]) < to_signed(v[1], w[1]);
    case Kind::Sle: return to_signed(v[0], w[0]) <= to_signed(v[1], w[1]);
    case Kind::Ite: return v[0] ? v[1] : v[2];
    case Kind::BoolAnd: return v[0] && v[1];
    case Kind::BoolOr: return v[0] || v[1];
    case Kind::BoolNot: return !v[0];
  }
  return 0;
}

size_t mix(size_t h, uint64_t v) {
  v ^= v >> 33;
  v *= 0xff51afd7ed558ccdULL;
  v ^= v >> 33;
  return h ^ (static_cast<size_t>(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
}

[[noreturn]] void type_error(Kind k, const std::string& msg) {
  throw TypeError(fmt::format("{}: {}", kind_name(k), msg));
}

}  // namespace

std::string_view kind_name(Kind k) { return kKindNames[static_cast<size_t>(k)]; }

MissingVariable::MissingVariable(uint32_t index)
    : std::out_of_range(fmt::format("assignment has no value for b{}", index)), index_(index) {}

// --- VarSet ----------------------------------------------------------------

bool VarSet::empty() const {
  return std::all_of(words_.begin(), words_.end(), [](uint64_t w) { return w == 0; });
}

size_t VarSet::count() const {
  size_t c = 0;
  for (uint64_t w : words_) c += static_cast<size_t>(std::popcount(w));
  return c;
}

bool VarSet::intersects(const VarSet& o) const {
  const size_t n = std::min(words_.size(), o.words_.size());
  for (size_t i = 0; i < n; ++i) {
    if (words_[i] & o.words_[i]) return true;
  }
  return false;
}

bool VarSet::unite(const VarSet& o) {
  if (words_.size() < o.words_.size()) words_.resize(o.words_.size(), 0);
  bool grew = false;
  for (size_t i = 0; i < o.words_.size(); ++i) {
    const uint64_t before = words_[i];
    words_[i] |= o.words_[i];
    grew |= before != words_[i];
  }
  return grew;
}

std::vector<uint32_t> VarSet::to_vector() const {
  std::vector<uint32_t> out;
  for (size_t i = 0; i < words_.size(); ++i) {
    uint64_t w = words_[i];
    while (w) {
      const int b = std::countr_zero(w);
      out.push_back(static_cast<uint32_t>(i * 64 + static_cast<size_t>(b)));
      w &= w - 1;
    }
  }
  return out;
}

void VarSet::trim() {
  while (!words_.empty() && words_.back() == 0) words_.pop_back();
}

bool operator==(const VarSet& a, const VarSet& b) {
  const size_t n = std::max(a.words_.size(), b.words_.size());
  for (size_t i = 0; i < n; ++i) {
    const uint64_t x = i < a.words_.size() ? a.words_[i] : 0;
    const uint64_t y = i < b.words_.size() ? b.words_[i] : 0;
    if (x != y) return false;
  }
  return true;
}

// --- Factory ---------------------------------------------------------------

bool NodeEq::operator()(const Node* a, const Node* b) const {
  return a->kind_ == b->kind_ && a->width_ == b->width_ && a->is_bool_ == b->is_bool_ && a->p0_ == b->p0_ &&
         a->p1_ == b->p1_ && a->value_ == b->value_ && a->children_ == b->children_;
}

Expr ExprFactory::intern(Node&& proto) {
  size_t h = static_cast<size_t>(proto.kind_);
  h = mix(h, proto.width_ | (uint64_t{proto.is_bool_} << 8) | (uint64_t{proto.p0_} << 16) |
                 (uint64_t{proto.p1_} << 32));
  h = mix(h, proto.value_);
  for (const Node* c : proto.children_) h = mix(h, c->id_);
  proto.hash_ = h;
  if (auto it = table_.find(&proto); it != table_.end()) return *it;

  for (const Node* c : proto.children_) proto.used_vars_.unite(c->used_vars_);
  if (proto.kind_ == Kind::Var) proto.used_vars_.insert(proto.var_index());
  proto.id_ = static_cast<uint32_t>(nodes_.size());
  nodes_.push_back(std::move(proto));
  const Node* n = &nodes_.back();
  table_.insert(n);
  return n;
}

Expr ExprFactory::constant(unsigned width, uint64_t value) {
  if (width == 0 || width > 64) throw TypeError(fmt::format("const: unsupported width {}", width));
  Node n;
  n.kind_ = Kind::Const;
  n.width_ = static_cast<uint8_t>(width);
  n.value_ = value & mask_of(width);
  return intern(std::move(n));
}

Expr ExprFactory::boolean(bool v) {
  Node n;
  n.kind_ = Kind::Const;
  n.width_ = 1;
  n.is_bool_ = true;
  n.value_ = v ? 1 : 0;
  return intern(std::move(n));
}

Expr ExprFactory::var(uint32_t index) {
  Node n;
  n.kind_ = Kind::Var;
  n.width_ = 8;
  n.value_ = index;
  return intern(std::move(n));
}

Expr ExprFactory::mk(Kind kind, std::span<const Expr> ch, unsigned p0, unsigned p1) {
  auto need = [&](size_t n) {
    if (ch.size() != n) type_error(kind, fmt::format("expected {} children, got {}", n, ch.size()));
  };
  auto need_bv = [&](Expr e) {
    if (e->is_bool()) type_error(kind, "expected a bitvector operand");
  };
  auto same_width = [&] {
    if (ch[0]->width() != ch[1]->width()) {
      type_error(kind, fmt::format("width mismatch {} vs {}", ch[0]->width(), ch[1]->width()));
    }
  };
  for (Expr c : ch) {
    if (c == nullptr) type_error(kind, "null operand");
  }

  switch (kind) {
    case Kind::Const:
    case Kind::Var:
      type_error(kind, "use constant()/var()");
    case Kind::Concat: {
      if (ch.size() < 2) type_error(kind, "needs at least two parts");
      unsigned total = 0;
      for (Expr c : ch) {
        need_bv(c);
        total += c->width();
      }
      if (total > 64) type_error(kind, fmt::format("result width {} exceeds 64", total));
      break;
    }
    case Kind::Extract:
      need(1);
      need_bv(ch[0]);
      if (p1 > p0 || p0 >= ch[0]->width()) {
        type_error(kind, fmt::format("bad range [{}:{}] of {}-bit term", p0, p1, ch[0]->width()));
      }
      break;
    case Kind::ZeroExtend:
    case Kind::SignExtend:
      need(1);
      need_bv(ch[0]);
      if (p0 == 0 || ch[0]->width() + p0 > 64) type_error(kind, "bad extension amount");
      break;
    case Kind::Add:
    case Kind::Sub:
    case Kind::Mul:
    case Kind::And:
    case Kind::Or:
    case Kind::Xor:
    case Kind::Shl:
    case Kind::LShr:
    case Kind::AShr:
    case Kind::Ult:
    case Kind::Ule:
    case Kind::Slt:
    case Kind::Sle:
      need(2);
      need_bv(ch[0]);
      need_bv(ch[1]);
      same_width();
      break;
    case Kind::Not:
    case Kind::Neg:
      need(1);
      need_bv(ch[0]);
      break;
    case Kind::Eq:
    case Kind::Ne:
      need(2);
      if (ch[0]->is_bool() != ch[1]->is_bool()) type_error(kind, "sort mismatch");
      same_width();
      break;
    case Kind::Ite:
      need(3);
      if (!ch[0]->is_bool()) type_error(kind, "condition must be boolean");
      if (ch[1]->is_bool() != ch[2]->is_bool() || ch[1]->width() != ch[2]->width()) {
        type_error(kind, "branch sort mismatch");
      }
      break;
    case Kind::BoolAnd:
    case Kind::BoolOr:
      need(2);
      if (!ch[0]->is_bool() || !ch[1]->is_bool()) type_error(kind, "expected boolean operands");
      break;
    case Kind::BoolNot:
      need(1);
      if (!ch[0]->is_bool()) type_error(kind, "expected a boolean operand");
      break;
  }

  if (level_ == Simplify::None) return build(kind, ch, p0, p1);
  if (level_ == Simplify::Full) {
    if (Expr s = simplify(kind, ch, p0, p1)) return s;
  }
  return build(kind, ch, p0, p1);
}

Expr ExprFactory::build(Kind kind, std::span<const Expr> ch, unsigned p0, unsigned p1) {
  unsigned width = 0;
  bool is_bool = false;
  switch (kind) {
    case Kind::Concat:
      for (Expr c : ch) width += c->width();
      break;
    case Kind::Extract: width = p0 - p1 + 1; break;
    case Kind::ZeroExtend:
    case Kind::SignExtend: width = ch[0]->width() + p0; break;
    case Kind::Eq:
    case Kind::Ne:
    case Kind::Ult:
    case Kind::Ule:
    case Kind::Slt:
    case Kind::Sle:
    case Kind::BoolAnd:
    case Kind::BoolOr:
    case Kind::BoolNot:
      width = 1;
      is_bool = true;
      break;
    case Kind::Ite:
      width = ch[1]->width();
      is_bool = ch[1]->is_bool();
      break;
    default: width = ch[0]->width(); break;
  }

  if (level_ != Simplify::None) {
    if (Expr f = fold(kind, ch, p0, p1, width, is_bool)) return f;
  }

  Node n;
  n.kind_ = kind;
  n.width_ = static_cast<uint8_t>(width);
  n.is_bool_ = is_bool;
  if (kind == Kind::Extract || kind == Kind::ZeroExtend || kind == Kind::SignExtend) {
    n.p0_ = static_cast<uint16_t>(p0);
    n.p1_ = static_cast<uint16_t>(p1);
  }
  n.children_.assign(ch.begin(), ch.end());
  return intern(std::move(n));
}

Expr ExprFactory::fold(Kind kind, std::span<const Expr> ch, unsigned p0, unsigned p1, unsigned width,
                       bool is_bool) {
  if (kind == Kind::Ite && ch[0]->is_const()) return ch[0]->value() ? ch[1] : ch[2];
  if (!std::all_of(ch.begin(), ch.end(), [](Expr c) { return c->is_const(); })) return nullptr;
  std::array<uint64_t, 8> vals{};
  std::array<uint8_t, 8> widths{};
  std::vector<uint64_t> big_vals;
  std::vector<uint8_t> big_widths;
  const uint64_t* v = vals.data();
  const uint8_t* w = widths.data();
  if (ch.size() > vals.size()) {
    for (Expr c : ch) {
      big_vals.push_back(c->value());
      big_widths.push_back(static_cast<uint8_t>(c->width()));
    }
    v = big_vals.data();
    w = big_widths.data();
  } else {
    for (size_t i = 0; i < ch.size(); ++i) {
      vals[i] = ch[i]->value();
      widths[i] = static_cast<uint8_t>(ch[i]->width());
    }
  }
  const uint64_t r = apply(kind, width, p0, p1, v, w, ch.size());
  return is_bool ? boolean(r != 0) : constant(width, r);
}

Expr ExprFactory::simplify(Kind kind, std::span<const Expr> ch, unsigned p0, unsigned p1) {
  switch (kind) {
    case Kind::And:
      if (ch[0] == ch[1]) return ch[0];
      if (ch[0]->is_const(0) || ch[1]->is_const(0)) return constant(ch[0]->width(), 0);
      return nullptr;
    case Kind::Or:
      if (ch[0] == ch[1]) return ch[0];
      return nullptr;
    case Kind::Xor:
    case Kind::Sub:
      if (ch[0] == ch[1]) return constant(ch[0]->width(), 0);
      return nullptr;
    case Kind::Mul:
      if (ch[0]->is_const(0) || ch[1]->is_const(0)) return constant(ch[0]->width(), 0);
      return nullptr;
    case Kind::Shl:
    case Kind::LShr:
    case Kind::AShr:
      if (ch[0]->is_const(0)) return constant(ch[0]->width(), 0);
      return nullptr;

    case Kind::Extract: {
      Expr a = ch[0];
      const unsigned high = p0;
      const unsigned low = p1;
      if (low == 0 && high + 1 == a->width()) return a;
      if (a->kind() == Kind::Extract) return extract(high + a->low(), low + a->low(), a->child(0));
      if (a->kind() == Kind::Concat) {
        // Walk limbs from the least significant (last) one.
        unsigned offset = 0;
        for (size_t i = a->num_children(); i-- > 0;) {
          Expr limb = a->child(i);
          const unsigned w = limb->width();
          if (low >= offset && high < offset + w) return extract(high - offset, low - offset, limb);
          if (low < offset + w) break;  // range straddles limbs
          offset += w;
        }
        return nullptr;
      }
      if (a->kind() == Kind::ZeroExtend && high < a->child(0)->width()) return extract(high, low, a->child(0));
      return nullptr;
    }

    case Kind::Concat: {
      // Flatten nested concats, then merge adjacent descending extracts of
      // the same base.
      std::vector<Expr> parts;
      bool changed = false;
      for (Expr c : ch) {
        if (c->kind() == Kind::Concat) {
          parts.insert(parts.end(), c->children().begin(), c->children().end());
          changed = true;
        } else {
          parts.push_back(c);
        }
      }
      std::vector<Expr> merged;
      for (Expr p : parts) {
        if (!merged.empty()) {
          Expr prev = merged.back();
          if (prev->kind() == Kind::Extract && p->kind() == Kind::Extract && prev->child(0) == p->child(0) &&
              prev->low() == p->high() + 1) {
            merged.back() = extract(prev->high(), p->low(), p->child(0));
            changed = true;
            continue;
          }
        }
        merged.push_back(p);
      }
      if (merged.size() == 1) return merged[0];
      if (changed) return mk(Kind::Concat, merged);
      return nullptr;
    }
    default:
      return nullptr;
  }
}

// --- Assignment / eval ------------------------------------------------------

bool Assignment::empty() const {
  return std::all_of(values_.begin(), values_.end(), [](int16_t v) { return v < 0; });
}

std::vector<std::pair<uint32_t, uint8_t>> Assignment::entries() const {
  std::vector<std::pair<uint32_t, uint8_t>> out;
  for (size_t i = 0; i < values_.size(); ++i) {
    if (values_[i] >= 0) out.emplace_back(static_cast<uint32_t>(i), static_cast<uint8_t>(values_[i]));
  }
  return out;
}

uint64_t eval(Expr root, const Assignment& a) {
  std::unordered_map<Expr, uint64_t> memo;
  std::function<uint64_t(Expr)> go = [&](Expr e) -> uint64_t {
    if (e->kind() == Kind::Const) return e->value();
    if (e->kind() == Kind::Var) {
      auto v = a.get(e->var_index());
      if (!v) throw MissingVariable(e->var_index());
      return *v;
    }
    if (auto it = memo.find(e); it != memo.end()) return it->second;
    const size_t n = e->num_children();
    std::vector<uint64_t> vals(n);
    std::vector<uint8_t> widths(n);
    for (size_t i = 0; i < n; ++i) {
      vals[i] = go(e->child(i));
      widths[i] = static_cast<uint8_t>(e->child(i)->width());
    }
    const uint64_t r = apply(e->kind(), e->width(), e->p0(), e->p1(), vals.data(), widths.data(), n);
    memo.emplace(e, r);
    return r;
  };
  return go(root);
}

CompiledExpr::CompiledExpr(Expr root) {
  std::unordered_map<Expr, uint32_t> slot;
  // Iterative post-order over the DAG.
  std::vector<std::pair<Expr, size_t>> stack{{root, 0}};
  while (!stack.empty()) {
    auto& [e, next] = stack.back();
    if (slot.count(e)) {
      stack.pop_back();
      continue;
    }
    if (next < e->num_children()) {
      Expr c = e->child(next++);
      if (!slot.count(c)) stack.emplace_back(c, 0);
      continue;
    }
    Op op{e->kind(), e->is_bool(), static_cast<uint8_t>(e->width()), static_cast<uint16_t>(e->p0()),
          static_cast<uint16_t>(e->p1()), e->value(), static_cast<uint32_t>(child_slots_.size()),
          static_cast<uint32_t>(e->num_children())};
    for (Expr c : e->children()) child_slots_.push_back(slot.at(c));
    slot.emplace(e, static_cast<uint32_t>(ops_.size()));
    ops_.push_back(op);
    stack.pop_back();
  }
  scratch_.resize(ops_.size());
}

uint64_t CompiledExpr::operator()(std::span<const uint8_t> vars) const {
  std::array<uint64_t, 8> v{};
  std::array<uint8_t, 8> w{};
  std::vector<uint64_t> bv;
  std::vector<uint8_t> bw;
  for (size_t i = 0; i < ops_.size(); ++i) {
    const Op& op = ops_[i];
    if (op.kind == Kind::Const) {
      scratch_[i] = op.value;
      continue;
    }
    if (op.kind == Kind::Var) {
      if (op.value >= vars.size()) throw MissingVariable(static_cast<uint32_t>(op.value));
      scratch_[i] = vars[op.value];
      continue;
    }
    const uint64_t* vp = v.data();
    const uint8_t* wp = w.data();
    if (op.num_children <= v.size()) {
      for (uint32_t k = 0; k < op.num_children; ++k) {
        const uint32_t s = child_slots_[op.first_child + k];
        v[k] = scratch_[s];
        w[k] = ops_[s].width;
      }
    } else {
      bv.clear();
      bw.clear();
      for (uint32_t k = 0; k < op.num_children; ++k) {
        const uint32_t s = child_slots_[op.first_child + k];
        bv.push_back(scratch_[s]);
        bw.push_back(ops_[s].width);
      }
      vp = bv.data();
      wp = bw.data();
    }
    scratch_[i] = apply(op.kind, op.width, op.p0, op.p1, vp, wp, op.num_children);
  }
  return scratch_.back();
}

// --- Printing ----------------------------------------------------------------

namespace {

std::string const_text(Expr e) {
  if (e->is_bool()) return e->value() ? "true" : "false";
  const unsigned w = e->width();
  if (w % 4 == 0) return fmt::format("#x{:0{}x}", e->value(), w / 4);
  return fmt::format("#b{:0{}b}", e->value(), w);
}

std::string op_head(Expr e) {
  switch (e->kind()) {
    case Kind::Extract: return fmt::format("(_ extract {} {})", e->high(), e->low());
    case Kind::ZeroExtend: return fmt::format("(_ zero_extend {})", e->p0());
    case Kind::SignExtend: return fmt::format("(_ sign_extend {})", e->p0());
    default: return std::string(kind_name(e->kind()));
  }
}

std::string sort_text(Expr e) { return e->is_bool() ? "Bool" : fmt::format("(_ BitVec {})", e->width()); }

void render(Expr e, std::string& out, const std::unordered_map<Expr, std::string>* names) {
  if (names) {
    if (auto it = names->find(e); it != names->end()) {
      out += it->second;
      return;
    }
  }
  switch (e->kind()) {
    case Kind::Const: out += const_text(e); return;
    case Kind::Var: out += fmt::format("b{}", e->var_index()); return;
    default: break;
  }
  out += '(';
  out += op_head(e);
  for (Expr c : e->children()) {
    out += ' ';
    render(c, out, names);
  }
  out += ')';
}

}  // namespace

std::string to_smtlib(Expr e) {
  std::string out;
  render(e, out, nullptr);
  return out;
}

std::string smtlib_script(std::span<const Expr> asserts, bool check_sat) {
  // Reference counts over the DAG reachable from the assertions.
  std::unordered_map<Expr, size_t> refs;
  std::vector<Expr> order;  // post-order
  std::vector<std::pair<Expr, size_t>> stack;
  VarSet vars;
  for (Expr a : asserts) {
    vars.unite(a->used_vars());
    if (refs[a]++ > 0) continue;
    stack.emplace_back(a, 0);
    while (!stack.empty()) {
      auto& [e, next] = stack.back();
      if (next < e->num_children()) {
        Expr c = e->child(next++);
        if (refs[c]++ == 0) stack.emplace_back(c, 0);
        continue;
      }
      order.push_back(e);
      stack.pop_back();
    }
  }

  std::string out = "(set-logic QF_BV)\n";
  for (uint32_t v : vars.to_vector()) out += fmt::format("(declare-const b{} (_ BitVec 8))\n", v);
  std::unordered_map<Expr, std::string> names;
  for (Expr e : order) {
    if (e->num_children() == 0 || refs[e] < 2) continue;
    std::string body;
    render(e, body, &names);
    const std::string name = fmt::format("t{}", names.size());
    out += fmt::format("(define-fun {} () {} {})\n", name, sort_text(e), body);
    names.emplace(e, name);
  }
  for (Expr a : asserts) {
    std::string body;
    render(a, body, &names);
    out += fmt::format("(assert {})\n", body);
  }
  if (check_sat) out += "(check-sat)\n";
  return out;
}

size_t dag_size(Expr root) {
  std::unordered_set<Expr> seen;
  std::vector<Expr> stack{root};
  while (!stack.empty()) {
    Expr e = stack.back();
    stack.pop_back();
    if (!seen.insert(e).second) continue;
    for (Expr c : e->children()) stack.push_back(c);
  }
  return seen.size();
}

}  // namespace minidse::ast
