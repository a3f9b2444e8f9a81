#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "minidse/events.hpp"
#include "minidse/expr.hpp"
#include "minidse/jumptab.hpp"
#include "minidse/memory.hpp"
#include "minidse/program.hpp"
#include "minidse/vm.hpp"

namespace minidse::symex {

using ast::Expr;

struct PathConstraint {
  uint64_t site = 0;
  Expr cond = nullptr;  ///< condition of the direction actually taken
  BranchKind kind = BranchKind::Conditional;
  std::vector<jumptab::AltTarget> alt_targets;  ///< indirect only
  bool taken = false;                           ///< conditional outcome
  uint64_t target = 0;                          ///< concrete next pc
  uint64_t step = 0;
  uint32_t tid = 0;
};

using PathPredicate = std::vector<PathConstraint>;

struct SymexConfig {
  bool skip = true;            ///< skip instructions without symbolic operands
  bool jumptables = true;      ///< resolve table-driven indirect jumps
  bool context_switch = true;  ///< per-thread symbolic registers
  size_t max_table_size = jumptab::kDefaultMaxTableSize;
  uint64_t max_predicate_ms = 0;  ///< stop consuming events after this long (0 = off)
};

struct SymexStats {
  uint64_t instruction_events = 0;
  uint64_t symbolic_instructions = 0;
  uint64_t skipped_instructions = 0;
  uint64_t concretized_addresses = 0;
  uint64_t context_switches = 0;
  uint64_t jump_tables = 0;
  uint64_t unresolved_indirect = 0;
  bool truncated = false;  ///< max_predicate_ms hit; later events were ignored
};

struct ThreadSymbolicContext {
  std::array<Expr, kNumRegs> regs{};   ///< parent-register granularity
  std::array<Expr, kNumFlags> flags{}; ///< boolean terms
};

/// Byte-granular symbolic memory, paged so that runs of accesses to the same
/// buffer skip the hash lookup.
class SymbolicMemory {
 public:
  Expr get(uint64_t addr) const {
    const Page* p = find_page(addr >> kPageBits);
    return p ? p->bytes[addr & kPageMask] : nullptr;
  }
  void set(uint64_t addr, Expr e);
  /// True when any byte of [addr, addr+n) is symbolic.
  bool any(uint64_t addr, uint64_t n) const;
  bool empty() const { return live_ == 0; }

 private:
  static constexpr unsigned kPageBits = 8;
  static constexpr uint64_t kPageMask = (uint64_t{1} << kPageBits) - 1;
  struct Page {
    std::array<Expr, size_t{1} << kPageBits> bytes{};
    uint32_t live = 0;
  };
  const Page* find_page(uint64_t page) const;

  std::unordered_map<uint64_t, std::unique_ptr<Page>> pages_;
  mutable uint64_t last_page_ = ~uint64_t{0};
  mutable Page* last_ = nullptr;
  uint64_t live_ = 0;
};

struct JumpTableRecord {
  uint64_t site = 0;
  uint64_t access = 0;
  jumptab::JumpTable table;
};

class SymbolicExecutor {
 public:
  SymbolicExecutor(const Program& prog, std::span<const uint8_t> seed, ast::ExprFactory& factory,
                   SymexConfig cfg = {});

  SymbolicExecutor(const SymbolicExecutor&) = delete;
  SymbolicExecutor& operator=(const SymbolicExecutor&) = delete;

  void on_event(const Event& ev);

  bool is_symbolic_instruction(const Instruction& insn) const;

  const PathPredicate& predicate() const { return predicate_; }
  PathPredicate take_predicate() { return std::move(predicate_); }
  const SymexStats& stats() const { return stats_; }
  const std::vector<JumpTableRecord>& jump_tables() const { return tables_; }
  /// Number of distinct input bytes bound to symbolic variables.
  uint32_t var_count() const { return static_cast<uint32_t>(vars_.count()); }
  bool finished() const { return finished_; }

  /// Symbolic state inspection (nullptr means concrete).
  Expr reg_expr(uint8_t reg) const { return ctx().regs[reg]; }
  Expr flag_expr(Flag f) const { return ctx().flags[static_cast<size_t>(f)]; }
  Expr mem_expr(uint64_t addr) const;
  uint32_t current_tid() const { return current_; }
  const ThreadSymbolicContext& context_of(uint32_t tid) const;

 private:
  ThreadSymbolicContext& ctx() { return *cur_ctx_; }
  const ThreadSymbolicContext& ctx() const { return *cur_ctx_; }
  bool context_switch_on() const { return cfg_.context_switch; }

  void on_read(const ReadSymbolicInput& ev);
  void on_write(const WriteSymbolicInput& ev);
  void on_instruction(const Instruction& insn);
  void on_switch(const ThreadSwitch& ev);
  void exec(const Instruction& insn);
  void track_concrete(const Instruction& insn);

  Expr read_reg(const Operand& op);
  void write_reg(const Operand& op, Expr v);
  Expr address_expr(const Operand& op);
  Expr read_mem(const Operand& op);
  void write_mem(uint64_t addr, unsigned size, Expr v);
  Expr read_src(const Operand& op);
  Expr read_flag(Flag f, const Instruction& insn);
  void set_flag(Flag f, Expr v);
  void set_flags(Expr zf, Expr sf, Expr cf, Expr of);

  void alu(const Instruction& insn);
  void branch(const Instruction& insn);
  void indirect(const Instruction& insn);

  const Program& prog_;
  std::vector<uint8_t> input_;
  ast::ExprFactory& f_;
  SymexConfig cfg_;

  SymbolicMemory mem_;
  std::unordered_map<uint32_t, ThreadSymbolicContext> contexts_;
  ThreadSymbolicContext shared_;
  uint32_t current_ = 0;
  std::chrono::steady_clock::time_point deadline_{};
  ThreadSymbolicContext* cur_ctx_ = nullptr;  // contexts_ nodes are address-stable
  std::vector<jumptab::BlockInsn>* cur_block_ = nullptr;
  /// Concrete memory mirror used to read jump tables.
  SparseMemory mirror_;
  /// Symbolic content of input-file bytes written back by the program.
  std::unordered_map<uint64_t, Expr> file_overrides_;
  std::unordered_map<uint32_t, std::vector<jumptab::BlockInsn>> blocks_;

  PathPredicate predicate_;
  SymexStats stats_;
  std::vector<JumpTableRecord> tables_;
  ast::VarSet vars_;
  bool finished_ = false;
};

/// Runs the concrete VM on `seed` and builds the path predicate from its
/// event stream (VM on a producer thread, bounded channel in between).
struct TraceResult {
  RunResult run;
  PathPredicate predicate;
  SymexStats stats;
  std::vector<JumpTableRecord> tables;
  uint32_t var_count = 0;
};

TraceResult trace_and_build(const Program& prog, std::span<const uint8_t> seed, ast::ExprFactory& factory,
                            const RunConfig& run_cfg, const SymexConfig& symex_cfg);

/// Replays a recorded event stream through a fresh executor; `run` is left
/// empty.
TraceResult replay_events(const Program& prog, std::span<const uint8_t> seed, std::span<const Event> events,
                          ast::ExprFactory& factory, const SymexConfig& cfg);

/// Replays a recorded event stream through a fresh executor.
PathPredicate build_from_events(const Program& prog, std::span<const uint8_t> seed, std::span<const Event> events,
                                ast::ExprFactory& factory, const SymexConfig& cfg, SymexStats* stats = nullptr);

/// SMT-LIB2 dump: one assert per constraint in trace order.
std::string predicate_smtlib(const PathPredicate& p);

}  // namespace minidse::symex
