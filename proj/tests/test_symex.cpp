#include "doctest.h"

#include <set>
#include <variant>

#include "minidse/pipeline.hpp"
#include "minidse/symex.hpp"
#include "support.hpp"

using namespace minidse;
using ast::Expr;

namespace {

std::vector<Event> record(const Program& p, std::span<const uint8_t> input) {
  std::vector<Event> events;
  run_concrete(p, input, {}, [&](Event&& e) { events.push_back(std::move(e)); });
  return events;
}

/// Feeds events until the instruction at `addr` is next; returns it.
const Instruction* feed_until(symex::SymbolicExecutor& ex, const std::vector<Event>& events, uint64_t addr) {
  for (const auto& e : events) {
    if (const auto* ie = std::get_if<InstructionEvent>(&e); ie && ie->insn.address == addr) return &ie->insn;
    ex.on_event(e);
  }
  return nullptr;
}

void feed_all(symex::SymbolicExecutor& ex, const std::vector<Event>& events) {
  for (const auto& e : events) ex.on_event(e);
}

/// First conditional jump at or after `label`.
uint64_t jcc_after(const Program& p, const std::string& label) {
  for (uint64_t a = p.label(label); a < p.code_end(); a += kInsnSize) {
    if (is_conditional_jump(p.at(a)->opcode)) return a;
  }
  return 0;
}

}  // namespace

TEST_SUITE("symex") {

TEST_CASE("read binds offset-numbered variables") {
  const Program p = assemble(R"(
.data
b:  .zero 24
c:  .zero 16
.code
    open r6
    read r6, b, 24
    open r5
    read r5, c, 8
    read r5, c + 8, 8
    exit 0
)");
  std::vector<uint8_t> seed(24, 0x11);
  const auto events = record(p, seed);
  ast::ExprFactory f;
  symex::SymbolicExecutor ex(p, seed, f);
  feed_all(ex, events);
  for (uint32_t i = 0; i < 24; ++i) CHECK(ex.mem_expr(p.label("b") + i) == f.var(i));
  for (uint32_t i = 0; i < 16; ++i) CHECK(ex.mem_expr(p.label("c") + i) == f.var(i));
  CHECK(ex.var_count() == 24);
}

TEST_CASE("slicing port binds 24 variables") {
  const Program p = testing::load_sample("slicing");
  const std::vector<uint8_t> seed(24, 0);
  ast::ExprFactory f;
  const auto tr = symex::trace_and_build(p, seed, f, {}, {});
  CHECK(tr.var_count == 24);
}

TEST_CASE("symbolic operand detection") {
  const Program p = assemble(R"(
.data
b:  .zero 8
t:  .zero 64
.code
    open r6
    read r6, b, 8
    mov r3, b
    mov r1, 2
    mov r2, 3
i1: add r1, r2
i2: mov r0, [r3]
    mov.b r4b, [b + 1]
    and r4, 7
    mov r3, t
i3: mov r0, [r3 + r4*8]
    exit 0
)");
  const std::vector<uint8_t> seed{1, 2, 3, 4, 5, 6, 7, 8};
  const auto events = record(p, seed);
  for (const char* label : {"i1", "i2", "i3"}) {
    CAPTURE(label);
    ast::ExprFactory f;
    symex::SymbolicExecutor ex(p, seed, f, {false, true, true});
    const Instruction* insn = feed_until(ex, events, p.label(label));
    REQUIRE(insn != nullptr);
    CHECK(ex.is_symbolic_instruction(*insn) == (std::string(label) != "i1"));
  }
}

TEST_CASE("kill operations desymbolize") {
  const Program p = assemble(R"(
.data
b:  .zero 8
.code
    open r6
    read r6, b, 8
    mov r0, [b]
    mov r1, [b]
k1: xor r0, r0
    mov.b r1b, 0
    test.b r1b, r1b
    jz z
z:  exit 0
)");
  const std::vector<uint8_t> seed{9, 9, 9, 9, 9, 9, 9, 9};
  const auto events = record(p, seed);
  ast::ExprFactory f;
  symex::SymbolicExecutor ex(p, seed, f);
  REQUIRE(feed_until(ex, events, p.label("k1")) != nullptr);
  CHECK(ex.reg_expr(0) != nullptr);
  symex::SymbolicExecutor full(p, seed, f);
  feed_all(full, events);
  CHECK(full.reg_expr(0) == nullptr);
  CHECK(full.reg_expr(1) != nullptr);  // upper 56 bits still symbolic
  CHECK(full.predicate().empty());
}

TEST_CASE("store then reload keeps the expression") {
  const Program p = assemble(R"(
.data
b:  .zero 8
t:  .zero 8
.code
    open r6
    read r6, b, 8
    mov r1, [b]
    add r1, 3
    mov [t], r1
    mov r2, [t]
    exit 0
)");
  const std::vector<uint8_t> seed{1, 2, 3, 4, 5, 6, 7, 8};
  ast::ExprFactory f;
  symex::SymbolicExecutor ex(p, seed, f);
  feed_all(ex, record(p, seed));
  REQUIRE(ex.reg_expr(1) != nullptr);
  CHECK(ex.reg_expr(2) == ex.reg_expr(1));
}

TEST_CASE("slicing port predicate") {
  const Program p = testing::load_sample("slicing");
  const std::vector<uint8_t> seed(24, 0);
  ast::ExprFactory f;
  const auto tr = symex::trace_and_build(p, seed, f, {}, {});
  std::set<uint64_t> sites;
  for (const auto& c : tr.predicate) sites.insert(c.site);
  std::set<uint64_t> want;
  for (const char* l : {"line8", "line10", "line11", "line12", "line13", "line14", "line15"}) {
    want.insert(jcc_after(p, l));
  }
  CHECK(sites == want);
  CHECK(tr.predicate.size() == 7);
  CHECK(sites.count(jcc_after(p, "line9")) == 0);
  CHECK(tr.stats.concretized_addresses >= 1);

  const ast::Assignment seed_asg(seed);
  for (const auto& c : tr.predicate) CHECK(ast::eval(c.cond, seed_asg) == 1);

  for (const auto& c : tr.predicate) {
    if (c.site != jcc_after(p, "line11")) continue;
    ast::VarSet want_vars;
    for (uint32_t v = 16; v < 24; ++v) want_vars.insert(v);
    CHECK(c.cond->used_vars() == want_vars);
  }
}

TEST_CASE("concrete conditions leave the predicate alone") {
  const Program p = assemble(R"(
.data
b:  .zero 1
.code
    open r6
    read r6, b, 1
    mov r0, 4
    cmp r0, 4
    jz x
x:  exit 0
)");
  const std::vector<uint8_t> seed{0};
  ast::ExprFactory f;
  CHECK(symex::trace_and_build(p, seed, f, {}, {}).predicate.empty());
}

TEST_CASE("concretized symbolic address adds nothing") {
  const char* tail = R"(
    mov.b r0b, [b + 1]
    cmp.b r0b, 'x'
    jz y
y:  exit 0
)";
  const std::string with = std::string(R"(
.data
b:  .zero 2
t:  .zero 256
.code
    open r6
    read r6, b, 2
    mov.b r2b, [b]
    mov.b r3b, [r2 + t]
)") + tail;
  const std::string without = std::string(R"(
.data
b:  .zero 2
t:  .zero 256
.code
    open r6
    read r6, b, 2
    mov r2, 0
    mov r3, 0
)") + tail;
  const std::vector<uint8_t> seed{5, 'q'};
  ast::ExprFactory f;
  const auto a = symex::trace_and_build(assemble(with), seed, f, {}, {});
  const auto b = symex::trace_and_build(assemble(without), seed, f, {}, {});
  REQUIRE(a.predicate.size() == 1);
  REQUIRE(b.predicate.size() == 1);
  CHECK(a.predicate[0].cond == b.predicate[0].cond);
  CHECK(a.stats.concretized_addresses == 1);
}

TEST_CASE("per-thread contexts") {
  const Program p = testing::load_sample("minsearch");
  const auto seed = testing::sample_seed("minsearch");
  ast::ExprFactory f;
  const auto tr = symex::trace_and_build(p, seed, f, {}, {});
  std::set<uint32_t> tids;
  for (const auto& c : tr.predicate) tids.insert(c.tid);
  CHECK(tids == std::set<uint32_t>{0, 1, 2, 3, 4});
  CHECK(tr.stats.context_switches > 0);
  const uint64_t last = jcc_after(p, "reduce");
  bool main_reduce = false;
  for (const auto& c : tr.predicate) main_reduce |= c.tid == 0 && c.site == last;
  CHECK(main_reduce);

  symex::SymbolicExecutor ex(p, seed, f);
  const auto events = record(p, seed);
  bool checked_fresh = false, checked_back = false;
  std::array<Expr, kNumRegs> saved{};
  uint32_t saved_tid = 0;
  bool have_saved = false;
  for (const auto& e : events) {
    if (const auto* sw = std::get_if<ThreadSwitch>(&e)) {
      if (!have_saved) {
        saved = ex.context_of(sw->from_tid).regs;
        saved_tid = sw->from_tid;
        have_saved = true;
      }
      const bool fresh = ex.context_of(sw->to_tid).regs == std::array<Expr, kNumRegs>{};
      ex.on_event(e);
      if (fresh && !checked_fresh) {
        for (uint8_t r = 0; r < kNumRegs; ++r) CHECK(ex.reg_expr(r) == nullptr);
        checked_fresh = true;
      }
      if (have_saved && sw->to_tid == saved_tid && !checked_back) {
        CHECK(ex.context_of(saved_tid).regs == saved);
        checked_back = true;
      }
      continue;
    }
    ex.on_event(e);
  }
  CHECK(checked_fresh);
  CHECK(checked_back);
}

TEST_CASE("skipping preserves predicates on every sample") {
  for (const auto& stem : testing::sample_stems()) {
    CAPTURE(stem);
    const Program p = testing::load_sample(stem);
    const auto seed = testing::sample_seed(stem);
    const auto events = record(p, seed);
    ast::ExprFactory f;
    symex::SymexStats with, without;
    const auto a = symex::build_from_events(p, seed, events, f, {true, true, true}, &with);
    const auto b = symex::build_from_events(p, seed, events, f, {false, true, true}, &without);
    CHECK(same_predicate(a, b));
    CHECK(with.symbolic_instructions < without.symbolic_instructions);
    CHECK(without.symbolic_instructions == without.instruction_events);
  }
}

TEST_CASE("replay matches the live pipeline") {
  const Program p = testing::load_sample("parse_tlv");
  const auto seed = testing::sample_seed("parse_tlv");
  ast::ExprFactory f;
  const auto live = symex::trace_and_build(p, seed, f, {}, {});
  const auto events = record(p, seed);
  const auto replayed = symex::replay_events(p, seed, events, f, {});
  CHECK(same_predicate(live.predicate, replayed.predicate));
  CHECK(live.var_count == replayed.var_count);
  const std::string dump = symex::predicate_smtlib(live.predicate);
  size_t asserts = 0;
  for (size_t q = dump.find("(assert"); q != std::string::npos; q = dump.find("(assert", q + 1)) ++asserts;
  CHECK(asserts == live.predicate.size());
}

TEST_CASE("single-target table adds no branch") {
  const Program p = assemble(R"(
.data
t:  .quad x, x, x, x
s:  .zero 1
.code
    open r6
    read r6, s, 1
    mov r0, 0
    mov.b r0b, [s]
    and r0, 3
    jmp [r0*8 + t]
x:  exit 0
)");
  const std::vector<uint8_t> seed{2};
  ast::ExprFactory f;
  const auto tr = symex::trace_and_build(p, seed, f, {}, {});
  CHECK(tr.stats.jump_tables == 1);
  CHECK(tr.predicate.empty());
}

TEST_CASE("time limit truncates") {
  const Program p = assemble(R"(
.data
b:  .zero 1
.code
    open r6
    read r6, b, 1
    mov r1, 0
l:  mov.b r0b, [b]
    add r1, 1
    cmp r1, 3000000
    jb l
    exit 0
)");
  const std::vector<uint8_t> seed{1};
  ast::ExprFactory f;
  symex::SymexConfig cfg;
  cfg.skip = false;
  cfg.max_predicate_ms = 1;
  const auto tr = symex::trace_and_build(p, seed, f, {64, 100'000'000}, cfg);
  CHECK(tr.stats.truncated);
  CHECK(tr.run.status == RunStatus::Exited);
}

}
