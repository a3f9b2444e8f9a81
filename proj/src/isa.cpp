#include "minidse/isa.hpp"

#include <fmt/format.h>

namespace minidse {

namespace {

constexpr std::array<std::string_view, kNumOpcodes> kOpcodeNames = {
    "mov",  "load", "store", "addr", "add",   "sub",  "mul",  "and", "or",
    "xor",  "not",  "neg",   "shl",  "shr",   "sar",  "cmp",  "test", "jz",
    "jnz",  "jl",   "jle",   "jg",   "jge",   "jb",   "jbe",  "ja",  "jae",
    "jmp",  "spawn", "join", "yield", "open", "read", "write", "exit",
};

}  // namespace

std::string_view opcode_name(Opcode op) { return kOpcodeNames[static_cast<size_t>(op)]; }

std::optional<Opcode> opcode_from_name(std::string_view name) {
  for (size_t i = 0; i < kOpcodeNames.size(); ++i) {
    if (kOpcodeNames[i] == name) return static_cast<Opcode>(i);
  }
  return std::nullopt;
}

bool is_conditional_jump(Opcode op) { return op >= Opcode::Jz && op <= Opcode::Jae; }

bool is_control_transfer(Opcode op) { return is_conditional_jump(op) || op == Opcode::Jmp; }

bool is_binary_alu(Opcode op) {
  switch (op) {
    case Opcode::Add:
    case Opcode::Sub:
    case Opcode::Mul:
    case Opcode::And:
    case Opcode::Or:
    case Opcode::Xor:
    case Opcode::Shl:
    case Opcode::Shr:
    case Opcode::Sar:
      return true;
    default:
      return false;
  }
}

bool is_syscall(Opcode op) { return op >= Opcode::Open && op <= Opcode::Exit; }

std::vector<Flag> flags_read_by(Opcode jcc) {
  switch (jcc) {
    case Opcode::Jz:
    case Opcode::Jnz:
      return {Flag::ZF};
    case Opcode::Jl:
    case Opcode::Jge:
      return {Flag::SF, Flag::OF};
    case Opcode::Jle:
    case Opcode::Jg:
      return {Flag::ZF, Flag::SF, Flag::OF};
    case Opcode::Jb:
    case Opcode::Jae:
      return {Flag::CF};
    case Opcode::Jbe:
    case Opcode::Ja:
      return {Flag::CF, Flag::ZF};
    default:
      return {};
  }
}

bool condition_holds(Opcode jcc, bool zf, bool sf, bool cf, bool of) {
  switch (jcc) {
    case Opcode::Jz: return zf;
    case Opcode::Jnz: return !zf;
    case Opcode::Jl: return sf != of;
    case Opcode::Jle: return zf || sf != of;
    case Opcode::Jg: return !zf && sf == of;
    case Opcode::Jge: return sf == of;
    case Opcode::Jb: return cf;
    case Opcode::Jbe: return cf || zf;
    case Opcode::Ja: return !cf && !zf;
    case Opcode::Jae: return !cf;
    default: return false;
  }
}

std::string reg_name(RegRef r) {
  const char* suffix = "";
  switch (r.width) {
    case 8: suffix = "b"; break;
    case 16: suffix = "w"; break;
    case 32: suffix = "d"; break;
    default: break;
  }
  return fmt::format("r{}{}", r.id, suffix);
}

void add_implicit_operands(Instruction& insn) {
  auto& imp = insn.implicit_ops;
  imp.clear();
  const Opcode op = insn.opcode;
  if (is_binary_alu(op) || op == Opcode::Neg || op == Opcode::Cmp || op == Opcode::Test) {
    for (unsigned f = 0; f < kNumFlags; ++f) {
      imp.push_back(Operand::make_flag(static_cast<Flag>(f), Access::Write));
    }
  } else if (is_conditional_jump(op)) {
    for (Flag f : flags_read_by(op)) imp.push_back(Operand::make_flag(f, Access::Read));
  } else if (op == Opcode::Read || op == Opcode::Write) {
    imp.push_back(Operand::make_reg(RegRef{0, 64}, Access::Write));
    MemRef buf;
    buf.size = 0;  // fixed by the VM once the length is known
    imp.push_back(Operand::make_mem(buf, op == Opcode::Read ? Access::Write : Access::Read));
  }
}

namespace {

std::string operand_text(const Operand& op) {
  switch (op.kind) {
    case OperandKind::Reg:
      return reg_name(op.reg);
    case OperandKind::Imm:
      return fmt::format("{:#x}", op.value);
    case OperandKind::Flag: {
      constexpr std::array<const char*, kNumFlags> names = {"zf", "sf", "cf", "of"};
      return names[static_cast<size_t>(op.flag)];
    }
    case OperandKind::Mem: {
      std::string s = "[";
      bool first = true;
      if (op.mem.base != kNoReg) {
        s += fmt::format("r{}", op.mem.base);
        first = false;
      }
      if (op.mem.index != kNoReg) {
        s += fmt::format("{}r{}*{}", first ? "" : " + ", op.mem.index, op.mem.scale);
        first = false;
      }
      if (op.mem.disp != 0 || first) {
        if (first) {
          s += fmt::format("{:#x}", static_cast<uint64_t>(op.mem.disp));
        } else if (op.mem.disp < 0) {
          s += fmt::format(" - {:#x}", static_cast<uint64_t>(-op.mem.disp));
        } else {
          s += fmt::format(" + {:#x}", static_cast<uint64_t>(op.mem.disp));
        }
      }
      return s + "]";
    }
  }
  return "?";
}

}  // namespace

std::string to_string(const Instruction& insn) {
  std::string s = fmt::format("{:#06x}: {}", insn.address, opcode_name(insn.opcode));
  if (insn.width != 64) {
    s += insn.width == 8 ? ".b" : insn.width == 16 ? ".w" : ".d";
  }
  for (size_t i = 0; i < insn.explicit_ops.size(); ++i) {
    s += i == 0 ? " " : ", ";
    s += operand_text(insn.explicit_ops[i]);
  }
  return s;
}

}  // namespace minidse
