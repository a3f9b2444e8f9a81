#pragma once

#include <cstdint>
#include <deque>
#include <initializer_list>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace minidse::ast {

enum class Kind : uint8_t {
  Const,
  Var,
  Concat,
  Extract,
  ZeroExtend,
  SignExtend,
  Add,
  Sub,
  Mul,
  And,
  Or,
  Xor,
  Not,
  Neg,
  Shl,
  LShr,
  AShr,
  Eq,
  Ne,
  Ult,
  Ule,
  Slt,
  Sle,
  Ite,
  BoolAnd,
  BoolOr,
  BoolNot,
};

std::string_view kind_name(Kind k);

class TypeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class MissingVariable : public std::out_of_range {
 public:
  explicit MissingVariable(uint32_t index);
  uint32_t index() const { return index_; }

 private:
  uint32_t index_;
};

/// Set of input-byte indices backed by a word bitset.
class VarSet {
 public:
  VarSet() = default;
  VarSet(std::initializer_list<uint32_t> vars) {
    for (uint32_t v : vars) insert(v);
  }

  void insert(uint32_t v) {
    const size_t w = v / 64;
    if (words_.size() <= w) words_.resize(w + 1, 0);
    words_[w] |= uint64_t{1} << (v % 64);
  }
  bool contains(uint32_t v) const {
    const size_t w = v / 64;
    return w < words_.size() && ((words_[w] >> (v % 64)) & 1U);
  }
  bool empty() const;
  size_t count() const;
  bool intersects(const VarSet& o) const;
  /// Unites `o` into this set; returns true if the set grew.
  bool unite(const VarSet& o);
  std::vector<uint32_t> to_vector() const;

  friend bool operator==(const VarSet& a, const VarSet& b);

 private:
  void trim();
  std::vector<uint64_t> words_;
};

/// Immutable, hash-consed expression node.  Owned by its ExprFactory; user
/// code holds `Expr` (a non-owning pointer) and compares by identity.
class Node {
 public:
  Kind kind() const { return kind_; }
  unsigned width() const { return width_; }
  bool is_bool() const { return is_bool_; }
  /// Constant value (Const) or variable index (Var).
  uint64_t value() const { return value_; }
  uint32_t var_index() const { return static_cast<uint32_t>(value_); }
  /// Extract: high/low bit; ZeroExtend/SignExtend: p0 = extension amount.
  unsigned p0() const { return p0_; }
  unsigned p1() const { return p1_; }
  unsigned high() const { return p0_; }
  unsigned low() const { return p1_; }
  std::span<const Node* const> children() const { return children_; }
  const Node* child(size_t i) const { return children_[i]; }
  size_t num_children() const { return children_.size(); }

  bool symbolic() const { return !used_vars_.empty(); }
  const VarSet& used_vars() const { return used_vars_; }
  bool is_const() const { return kind_ == Kind::Const; }
  bool is_const(uint64_t v) const { return kind_ == Kind::Const && value_ == v; }

  size_t hash() const { return hash_; }
  /// Creation order within the owning factory.
  uint32_t id() const { return id_; }

 private:
  friend class ExprFactory;
  friend struct NodeHash;
  friend struct NodeEq;

  Kind kind_ = Kind::Const;
  bool is_bool_ = false;
  uint8_t width_ = 0;
  uint16_t p0_ = 0;
  uint16_t p1_ = 0;
  uint64_t value_ = 0;
  std::vector<const Node*> children_;
  VarSet used_vars_;
  size_t hash_ = 0;
  uint32_t id_ = 0;
};

using Expr = const Node*;

struct NodeHash {
  size_t operator()(const Node* n) const { return n->hash_; }
};
struct NodeEq {
  bool operator()(const Node* a, const Node* b) const;
};

enum class Simplify {
  None,  ///< hash-consing only
  Fold,  ///< plus constant folding
  Full,  ///< plus the rewrite rules
};

/// Owns and interns expression nodes.  Not thread-safe for construction;
/// nodes are immutable and may be read concurrently once built.
class ExprFactory {
 public:
  explicit ExprFactory(Simplify level = Simplify::Full) : level_(level) {}
  ExprFactory(const ExprFactory&) = delete;
  ExprFactory& operator=(const ExprFactory&) = delete;

  Simplify level() const { return level_; }
  size_t size() const { return nodes_.size(); }

  Expr constant(unsigned width, uint64_t value);
  Expr boolean(bool v);
  Expr var(uint32_t index);

  /// Generic constructor.  `p0`/`p1` carry Extract high/low or the
  /// extension amount.  Throws TypeError on ill-typed requests.
  Expr mk(Kind kind, std::span<const Expr> children, unsigned p0 = 0, unsigned p1 = 0);
  Expr mk(Kind kind, std::initializer_list<Expr> children, unsigned p0 = 0, unsigned p1 = 0) {
    return mk(kind, std::span<const Expr>(children.begin(), children.size()), p0, p1);
  }

  Expr extract(unsigned high, unsigned low, Expr a) { return mk(Kind::Extract, {a}, high, low); }
  Expr concat(std::span<const Expr> parts) { return mk(Kind::Concat, parts); }
  Expr concat(std::initializer_list<Expr> parts) { return mk(Kind::Concat, parts); }
  Expr zext(unsigned n, Expr a) { return n == 0 ? a : mk(Kind::ZeroExtend, {a}, n); }
  Expr sext(unsigned n, Expr a) { return n == 0 ? a : mk(Kind::SignExtend, {a}, n); }
  Expr add(Expr a, Expr b) { return mk(Kind::Add, {a, b}); }
  Expr sub(Expr a, Expr b) { return mk(Kind::Sub, {a, b}); }
  Expr mul(Expr a, Expr b) { return mk(Kind::Mul, {a, b}); }
  Expr bvand(Expr a, Expr b) { return mk(Kind::And, {a, b}); }
  Expr bvor(Expr a, Expr b) { return mk(Kind::Or, {a, b}); }
  Expr bvxor(Expr a, Expr b) { return mk(Kind::Xor, {a, b}); }
  Expr bvnot(Expr a) { return mk(Kind::Not, {a}); }
  Expr neg(Expr a) { return mk(Kind::Neg, {a}); }
  Expr shl(Expr a, Expr b) { return mk(Kind::Shl, {a, b}); }
  Expr lshr(Expr a, Expr b) { return mk(Kind::LShr, {a, b}); }
  Expr ashr(Expr a, Expr b) { return mk(Kind::AShr, {a, b}); }
  Expr eq(Expr a, Expr b) { return mk(Kind::Eq, {a, b}); }
  Expr ne(Expr a, Expr b) { return mk(Kind::Ne, {a, b}); }
  Expr ult(Expr a, Expr b) { return mk(Kind::Ult, {a, b}); }
  Expr ule(Expr a, Expr b) { return mk(Kind::Ule, {a, b}); }
  Expr slt(Expr a, Expr b) { return mk(Kind::Slt, {a, b}); }
  Expr sle(Expr a, Expr b) { return mk(Kind::Sle, {a, b}); }
  Expr ite(Expr c, Expr t, Expr e) { return mk(Kind::Ite, {c, t, e}); }
  Expr land(Expr a, Expr b) { return mk(Kind::BoolAnd, {a, b}); }
  Expr lor(Expr a, Expr b) { return mk(Kind::BoolOr, {a, b}); }
  Expr lnot(Expr a) { return mk(Kind::BoolNot, {a}); }

 private:
  Expr intern(Node&& proto);
  Expr simplify(Kind kind, std::span<const Expr> children, unsigned p0, unsigned p1);
  Expr fold(Kind kind, std::span<const Expr> children, unsigned p0, unsigned p1, unsigned width, bool is_bool);
  Expr build(Kind kind, std::span<const Expr> children, unsigned p0, unsigned p1);

  Simplify level_;
  std::deque<Node> nodes_;
  std::unordered_set<const Node*, NodeHash, NodeEq> table_;
};

/// Partial map from input-byte index to byte value.
class Assignment {
 public:
  Assignment() = default;
  explicit Assignment(std::span<const uint8_t> bytes) {
    for (size_t i = 0; i < bytes.size(); ++i) set(static_cast<uint32_t>(i), bytes[i]);
  }

  void set(uint32_t index, uint8_t v) {
    if (values_.size() <= index) values_.resize(index + 1, -1);
    values_[index] = v;
  }
  std::optional<uint8_t> get(uint32_t index) const {
    if (index >= values_.size() || values_[index] < 0) return std::nullopt;
    return static_cast<uint8_t>(values_[index]);
  }
  bool contains(uint32_t index) const { return get(index).has_value(); }
  bool empty() const;
  /// Assigned (index, value) pairs in ascending index order.
  std::vector<std::pair<uint32_t, uint8_t>> entries() const;

  friend bool operator==(const Assignment&, const Assignment&) = default;

 private:
  std::vector<int16_t> values_;
};

/// QF_BV evaluation; booleans evaluate to 0/1.  Throws MissingVariable.
uint64_t eval(Expr e, const Assignment& a);

/// Flattened DAG for repeated evaluation of the same expression over many
/// assignments.  Variable values are read from a dense byte array.
class CompiledExpr {
 public:
  explicit CompiledExpr(Expr root);
  uint64_t operator()(std::span<const uint8_t> vars) const;
  size_t size() const { return ops_.size(); }

 private:
  struct Op {
    Kind kind;
    bool is_bool;
    uint8_t width;
    uint16_t p0, p1;
    uint64_t value;
    uint32_t first_child;
    uint32_t num_children;
  };
  std::vector<Op> ops_;
  std::vector<uint32_t> child_slots_;
  mutable std::vector<uint64_t> scratch_;
};

inline VarSet used_variables(Expr e) { return e->used_vars(); }

/// Inline SMT-LIB2 rendering of a single term (shared subterms repeated).
std::string to_smtlib(Expr e);

/// SMT-LIB2 script: declarations for every used input byte (`b<i>`),
/// `define-fun` for shared subterms, one `assert` per constraint.
std::string smtlib_script(std::span<const Expr> asserts, bool check_sat = true);

/// Number of distinct nodes reachable from `e`.
size_t dag_size(Expr e);

}  // namespace minidse::ast
