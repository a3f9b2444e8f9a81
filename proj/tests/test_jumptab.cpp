#include "doctest.h"

#include <string>

#include "minidse/jumptab.hpp"
#include "support.hpp"

using namespace minidse;
using namespace minidse::jumptab;

using ast::Expr;

namespace {

/// Code section 0x400 .. 0x400 + 4*n.
Program code_of(size_t n) {
  std::string src;
  for (size_t i = 0; i + 1 < n; ++i) src += "mov r0, 0\n";
  src += "exit 0\n";
  return assemble(src);
}

std::vector<BlockInsn> block_of(const Program& p, uint64_t from, uint64_t to) {
  std::vector<BlockInsn> out;
  for (uint64_t a = from; a < to; a += kInsnSize) out.push_back(BlockInsn::from(*p.at(a)));
  return out;
}

Expr index_addr(ast::ExprFactory& f, uint64_t base, unsigned stride) {
  return f.add(f.constant(64, base), f.mul(f.zext(56, f.var(0)), f.constant(64, stride)));
}

}  // namespace

TEST_SUITE("jumptab") {

TEST_CASE("backward slice finds the table load") {
  const Program p = testing::load_sample("switch_off");
  uint64_t jmp = 0;
  for (const auto& insn : p.code) {
    if (insn.opcode == Opcode::Jmp && insn.explicit_ops[0].kind == OperandKind::Reg) jmp = insn.address;
  }
  REQUIRE(jmp != 0);
  const uint64_t start = p.label("main");
  const auto block = block_of(p, start, jmp);
  const BlockInsn j = BlockInsn::from(*p.at(jmp));
  const BlockInsn* src = backward_slice(block, j);
  REQUIRE(src != nullptr);
  CHECK(src->opcode == Opcode::Load);
  CHECK(src->address == jmp - 4 * kInsnSize);
}

TEST_CASE("memory-indirect jump is its own source") {
  const Program p = testing::load_sample("switch8");
  for (const auto& insn : p.code) {
    if (insn.opcode != Opcode::Jmp || insn.explicit_ops[0].kind != OperandKind::Mem) continue;
    const BlockInsn j = BlockInsn::from(insn);
    CHECK(backward_slice({}, j) == &j);
  }
}

TEST_CASE("no load in the chain") {
  const Program p = assemble("mov r0, 0x400\njmp r0\n");
  const auto block = block_of(p, 0x400, 0x404);
  const BlockInsn j = BlockInsn::from(*p.at(0x404));
  CHECK(backward_slice(block, j) == nullptr);
  // a block that starts at the jump cannot see an earlier load
  const Program q = assemble(".data\nt: .quad 0x404\n.code\nmov r0, [t]\njmp r0\n");
  CHECK(backward_slice({}, BlockInsn::from(*q.at(0x404))) == nullptr);
}

TEST_CASE("address table bounds") {
  const Program p = code_of(16);
  SparseMemory mem;
  const uint64_t base = 0x20000;
  for (int i = 0; i < 5; ++i) mem.store(base + 8 * i, 8, 0x400 + 4 * i);
  for (uint64_t access = base; access < base + 40; access += 8) {
    const auto t = parse_table(access, mem, p);
    REQUIRE(t.has_value());
    CHECK(t->kind == TableKind::Address);
    CHECK(t->base_addr == base);
    CHECK(t->stride == 8);
    REQUIRE(t->entries.size() == 5);
    for (int i = 0; i < 5; ++i) {
      CHECK(t->entries[i].entry_addr == base + 8 * i);
      CHECK(t->entries[i].raw == 0x400 + 4 * i);
    }
  }
}

TEST_CASE("too few entries") {
  const Program p = code_of(16);
  SparseMemory mem;
  mem.store(0x20000, 8, 0x400);
  mem.store(0x20008, 8, 0x404);
  CHECK_FALSE(parse_table(0x20000, mem, p).has_value());
  mem.store(0x20010, 8, 0x402);  // misaligned, not an instruction
  CHECK_FALSE(parse_table(0x20000, mem, p).has_value());
}

TEST_CASE("table size limit") {
  const Program p = code_of(4);
  SparseMemory mem;
  const uint64_t base = 0x40000;
  for (int i = 0; i < 600; ++i) mem.store(base + 8 * i, 8, 0x400);
  const uint64_t access = base + 8 * 300;
  const auto t = parse_table(access, mem, p, 512);
  REQUIRE(t.has_value());
  CHECK(t->entries.size() == 512);
  CHECK(t->find(access) != nullptr);
  const auto small = parse_table(access, mem, p, 10);
  REQUIRE(small.has_value());
  CHECK(small->entries.size() == 10);
  // alternating growth keeps the access near the middle
  CHECK(small->entries.front().entry_addr == access - 8 * 5);
}

TEST_CASE("eight distinct targets") {
  const Program p = code_of(16);
  SparseMemory mem;
  const uint64_t base = 0x20000;
  for (int i = 0; i < 8; ++i) mem.store(base + 8 * i, 8, 0x400 + 4 * i);
  auto t = parse_table(base, mem, p);
  REQUIRE(t.has_value());
  ast::ExprFactory f;
  const Expr sym = index_addr(f, base, 8);
  const auto c = build_constraints(*t, sym, 0x400, base, p, f);
  CHECK(c.alt_targets.size() == 7);
  CHECK(t->targets.size() == 8);
  for (size_t k = 1; k < c.alt_targets.size(); ++k) CHECK(c.alt_targets[k - 1].target < c.alt_targets[k].target);
  for (unsigned v = 0; v < 8; ++v) {
    ast::Assignment a;
    a.set(0, static_cast<uint8_t>(v));
    CHECK(ast::eval(c.taken_cond, a) == (v == 0));
    for (const auto& alt : c.alt_targets) CHECK(ast::eval(alt.cond, a) == (alt.target == 0x400 + 4 * v));
  }
}

TEST_CASE("duplicate targets merge into one disjunction") {
  const Program p = code_of(16);
  SparseMemory mem;
  const uint64_t base = 0x20000;
  // cases 1 and 2 share a target; 0 and 4 go to the default
  const uint64_t l1 = 0x410, l2 = 0x420, dflt = 0x430;
  const uint64_t targets[] = {dflt, l1, l1, l2, dflt};
  for (int i = 0; i < 5; ++i) mem.store(base + 8 * i, 8, targets[i]);
  auto t = parse_table(base + 8 * 3, mem, p);
  REQUIRE(t.has_value());
  ast::ExprFactory f;
  const auto c = build_constraints(*t, index_addr(f, base, 8), l2, base + 8 * 3, p, f);
  REQUIRE(c.alt_targets.size() == 2);
  for (const auto& alt : c.alt_targets) {
    CHECK(alt.cond->kind() == ast::Kind::BoolOr);
    unsigned hits = 0;
    for (unsigned v = 0; v < 256; ++v) {
      ast::Assignment a;
      a.set(0, static_cast<uint8_t>(v));
      hits += static_cast<unsigned>(ast::eval(alt.cond, a));
    }
    CHECK(hits == 2);
  }
}

TEST_CASE("offset table base recovery") {
  const Program p = code_of(64);
  SparseMemory mem;
  const uint64_t base = 0x10000;
  const int32_t raws[] = {-0x80, -0x40, -0x60};
  for (int i = 0; i < 3; ++i) mem.store(base + 4 * i, 4, static_cast<uint32_t>(raws[i]));
  auto t = parse_table(base, mem, p);
  REQUIRE(t.has_value());
  CHECK(t->kind == TableKind::Offset);
  CHECK(t->stride == 4);
  ast::ExprFactory f;
  const auto c = build_constraints(*t, index_addr(f, base, 4), 0x480, base, p, f);
  CHECK(t->offset_base == 0x500);
  REQUIRE(c.alt_targets.size() == 2);
  CHECK(c.alt_targets[0].target == 0x4A0);
  CHECK(c.alt_targets[1].target == 0x4C0);
  ast::Assignment a;
  a.set(0, 1);
  CHECK(ast::eval(c.alt_targets[1].cond, a) == 1);
  CHECK(describe(*t).find("offset") != std::string::npos);
}

TEST_CASE("disagreeing concrete target is rejected") {
  const Program p = code_of(16);
  SparseMemory mem;
  for (int i = 0; i < 4; ++i) mem.store(0x20000 + 8 * i, 8, 0x400 + 4 * i);
  auto t = parse_table(0x20000, mem, p);
  REQUIRE(t.has_value());
  ast::ExprFactory f;
  CHECK_THROWS_AS(build_constraints(*t, index_addr(f, 0x20000, 8), 0x40c, 0x20000, p, f), std::logic_error);
}

}
