#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace minidse {

inline constexpr unsigned kNumRegs = 8;
inline constexpr unsigned kNumFlags = 4;
/// Every instruction occupies one fixed-size slot in the code segment.
inline constexpr uint64_t kInsnSize = 4;
inline constexpr uint64_t kDefaultCodeBase = 0x400;
inline constexpr uint64_t kDefaultDataBase = 0x10000;

enum class Flag : uint8_t { ZF = 0, SF = 1, CF = 2, OF = 3 };

enum class Opcode : uint8_t {
  Mov,
  Load,
  Store,
  Addr,
  Add,
  Sub,
  Mul,
  And,
  Or,
  Xor,
  Not,
  Neg,
  Shl,
  Shr,
  Sar,
  Cmp,
  Test,
  Jz,
  Jnz,
  Jl,
  Jle,
  Jg,
  Jge,
  Jb,
  Jbe,
  Ja,
  Jae,
  Jmp,
  Spawn,
  Join,
  Yield,
  Open,
  Read,
  Write,
  Exit,
};
inline constexpr unsigned kNumOpcodes = static_cast<unsigned>(Opcode::Exit) + 1;

std::string_view opcode_name(Opcode op);
std::optional<Opcode> opcode_from_name(std::string_view name);

bool is_conditional_jump(Opcode op);
bool is_control_transfer(Opcode op);
/// Binary ALU operations that write their destination and all four flags.
bool is_binary_alu(Opcode op);
bool is_syscall(Opcode op);

/// Flags consulted by a conditional jump.
std::vector<Flag> flags_read_by(Opcode jcc);
/// Evaluates a conditional jump predicate on concrete flag bits.
bool condition_holds(Opcode jcc, bool zf, bool sf, bool cf, bool of);

enum class OperandKind : uint8_t { Reg = 0, Mem = 1, Imm = 2, Flag = 3 };

enum class Access : uint8_t { Read = 1, Write = 2, ReadWrite = 3 };

inline bool reads(Access a) { return (static_cast<uint8_t>(a) & 1U) != 0; }
inline bool writes(Access a) { return (static_cast<uint8_t>(a) & 2U) != 0; }

/// Register view: parent register id plus the width of the low-bit view
/// (8, 16, 32 or 64).
struct RegRef {
  uint8_t id = 0;
  uint8_t width = 64;

  friend bool operator==(const RegRef&, const RegRef&) = default;
};

std::string reg_name(RegRef r);

inline constexpr int8_t kNoReg = -1;

/// Memory reference `[base + index*scale + disp]`.  `size` is the access
/// size in bytes; syscall buffers may be larger than 8.
struct MemRef {
  int8_t base = kNoReg;
  int8_t index = kNoReg;
  uint8_t scale = 1;
  int64_t disp = 0;
  uint32_t size = 8;

  friend bool operator==(const MemRef&, const MemRef&) = default;
};

/// One explicit or implicit operand together with its concrete snapshot.
///
/// Snapshot semantics (filled in by the VM when the instruction executes):
///  - Reg:  `value` is the full 64-bit parent register before execution.
///  - Mem:  `addr` is the effective address, `value` the little-endian
///          memory content there before execution (0 when size > 8),
///          `base_value`/`index_value` the address registers.
///  - Flag: `value` is the flag bit before execution.
///  - Imm:  `value` is the immediate, truncated to the operand width.
struct Operand {
  OperandKind kind = OperandKind::Imm;
  Access access = Access::Read;
  uint8_t width = 64;  ///< bits; for Mem equal to size*8 when size <= 8
  RegRef reg{};
  MemRef mem{};
  Flag flag = Flag::ZF;

  uint64_t value = 0;
  uint64_t addr = 0;
  uint64_t base_value = 0;
  uint64_t index_value = 0;

  friend bool operator==(const Operand&, const Operand&) = default;

  static Operand make_reg(RegRef r, Access a) {
    Operand op;
    op.kind = OperandKind::Reg;
    op.access = a;
    op.width = r.width;
    op.reg = r;
    return op;
  }
  static Operand make_mem(MemRef m, Access a) {
    Operand op;
    op.kind = OperandKind::Mem;
    op.access = a;
    op.width = m.size <= 8 ? static_cast<uint8_t>(m.size * 8) : 0;
    op.mem = m;
    return op;
  }
  static Operand make_imm(uint64_t v, uint8_t width) {
    Operand op;
    op.kind = OperandKind::Imm;
    op.access = Access::Read;
    op.width = width;
    op.value = v;
    return op;
  }
  static Operand make_flag(Flag f, Access a) {
    Operand op;
    op.kind = OperandKind::Flag;
    op.access = a;
    op.width = 1;
    op.flag = f;
    return op;
  }
};

/// A decoded instruction.  Static fields come from the assembler; the VM
/// fills operand snapshots and `step` (global executed-instruction index)
/// when it is about to execute the instruction.
struct Instruction {
  uint64_t address = 0;
  Opcode opcode = Opcode::Mov;
  uint8_t width = 64;
  std::vector<Operand> explicit_ops;
  std::vector<Operand> implicit_ops;
  uint64_t step = 0;

  friend bool operator==(const Instruction&, const Instruction&) = default;

  template <typename F>
  void for_each_operand(F&& f) const {
    for (const auto& op : explicit_ops) f(op);
    for (const auto& op : implicit_ops) f(op);
  }
};

/// Adds the implicit operands (flags, syscall results and buffers) that the
/// opcode defines.  Used by the assembler and the container decoder.
void add_implicit_operands(Instruction& insn);

std::string to_string(const Instruction& insn);

}  // namespace minidse
