#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "minidse/expr.hpp"
#include "minidse/isa.hpp"
#include "minidse/memory.hpp"
#include "minidse/program.hpp"

namespace minidse::jumptab {

inline constexpr size_t kDefaultMaxTableSize = 512;
inline constexpr size_t kMinTableEntries = 3;

/// Compact record of one executed instruction inside the current basic
/// block.  For instructions with a memory operand `mem_addr` is the
/// concrete effective address and `mem_addr_expr` its symbolic form
/// (nullptr when the address is concrete).
struct BlockInsn {
  uint64_t address = 0;
  Opcode opcode = Opcode::Mov;
  std::array<Operand, 3> ops{};
  uint8_t num_ops = 0;
  uint64_t mem_addr = 0;
  uint32_t mem_size = 0;
  ast::Expr mem_addr_expr = nullptr;

  static BlockInsn from(const Instruction& insn);
  const Operand* mem_operand() const;
};

/// Finds the instruction whose memory read produces the jump target.
/// `block` holds the instructions preceding `jump` in its basic block.
/// Returns `&jump` for `jmp [mem]`, a pointer into `block` for a tracked
/// load, or nullptr.
const BlockInsn* backward_slice(std::span<const BlockInsn> block, const BlockInsn& jump);

enum class TableKind : uint8_t { Address, Offset };

struct TableEntry {
  uint64_t entry_addr = 0;
  int64_t raw = 0;  ///< code address, or sign-extended 32-bit offset
};

struct TargetGroup {
  uint64_t target = 0;
  std::vector<uint64_t> entry_addrs;
};

struct JumpTable {
  TableKind kind = TableKind::Address;
  uint64_t base_addr = 0;
  unsigned stride = 8;
  std::vector<TableEntry> entries;  ///< ascending entry_addr
  std::vector<TargetGroup> targets; ///< filled by build_constraints
  uint64_t offset_base = 0;

  const TableEntry* find(uint64_t entry_addr) const;
};

/// Parses an address table (stride 8, every value a code address) or an
/// offset table (stride 4, negative 32-bit values) around `access_addr`,
/// growing alternately downwards and upwards.
std::optional<JumpTable> parse_table(uint64_t access_addr, const SparseMemory& mem, const Program& prog,
                                     size_t max_entries = kDefaultMaxTableSize);

struct AltTarget {
  uint64_t target = 0;
  ast::Expr cond = nullptr;
};

struct IndirectConstraint {
  ast::Expr taken_cond = nullptr;
  std::vector<AltTarget> alt_targets;  ///< ascending target address
};

/// Builds the multi-target constraint for a resolved table.  Offset tables
/// get their base recovered from the concrete target; targets outside the
/// code section are dropped.  Throws std::logic_error when the concrete
/// access is not a table entry or disagrees with the concrete target.
IndirectConstraint build_constraints(JumpTable& tbl, ast::Expr sym_addr, uint64_t concrete_target,
                                     uint64_t concrete_access, const Program& prog, ast::ExprFactory& f);

std::string describe(const JumpTable& tbl);

}  // namespace minidse::jumptab
