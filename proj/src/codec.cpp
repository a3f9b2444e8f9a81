#include "minidse/codec.hpp"

namespace minidse {

namespace {

void write_operand(ByteWriter& w, const Operand& op) {
  w.u8(static_cast<uint8_t>(op.kind));
  w.u8(static_cast<uint8_t>(op.access));
  w.u8(op.width);
  switch (op.kind) {
    case OperandKind::Reg:
      w.u8(op.reg.id);
      w.u8(op.reg.width);
      w.u64(op.value);
      break;
    case OperandKind::Mem:
      w.u8(static_cast<uint8_t>(op.mem.base));
      w.u8(static_cast<uint8_t>(op.mem.index));
      w.u8(op.mem.scale);
      w.i64(op.mem.disp);
      w.u32(op.mem.size);
      w.u64(op.addr);
      w.u64(op.value);
      w.u64(op.base_value);
      w.u64(op.index_value);
      break;
    case OperandKind::Imm:
      w.u64(op.value);
      break;
    case OperandKind::Flag:
      w.u8(static_cast<uint8_t>(op.flag));
      w.u8(static_cast<uint8_t>(op.value));
      break;
  }
}

Operand read_operand(ByteReader& r) {
  Operand op;
  const uint8_t kind = r.u8();
  if (kind > static_cast<uint8_t>(OperandKind::Flag)) throw DecodeError("bad operand kind");
  op.kind = static_cast<OperandKind>(kind);
  const uint8_t access = r.u8();
  if (access < 1 || access > 3) throw DecodeError("bad operand access");
  op.access = static_cast<Access>(access);
  op.width = r.u8();
  switch (op.kind) {
    case OperandKind::Reg:
      op.reg.id = r.u8();
      op.reg.width = r.u8();
      if (op.reg.id >= kNumRegs) throw DecodeError("bad register id");
      op.value = r.u64();
      break;
    case OperandKind::Mem:
      op.mem.base = static_cast<int8_t>(r.u8());
      op.mem.index = static_cast<int8_t>(r.u8());
      op.mem.scale = r.u8();
      op.mem.disp = r.i64();
      op.mem.size = r.u32();
      op.addr = r.u64();
      op.value = r.u64();
      op.base_value = r.u64();
      op.index_value = r.u64();
      break;
    case OperandKind::Imm:
      op.value = r.u64();
      break;
    case OperandKind::Flag: {
      const uint8_t f = r.u8();
      if (f >= kNumFlags) throw DecodeError("bad flag id");
      op.flag = static_cast<Flag>(f);
      op.value = r.u8();
      break;
    }
  }
  return op;
}

}  // namespace

void write_instruction(ByteWriter& w, const Instruction& insn) {
  w.u64(insn.address);
  w.u8(static_cast<uint8_t>(insn.opcode));
  w.u8(insn.width);
  w.u64(insn.step);
  w.u8(static_cast<uint8_t>(insn.explicit_ops.size()));
  for (const auto& op : insn.explicit_ops) write_operand(w, op);
  w.u8(static_cast<uint8_t>(insn.implicit_ops.size()));
  for (const auto& op : insn.implicit_ops) write_operand(w, op);
}

Instruction read_instruction(ByteReader& r) {
  Instruction insn;
  insn.address = r.u64();
  const uint8_t opc = r.u8();
  if (opc >= kNumOpcodes) throw DecodeError("bad opcode");
  insn.opcode = static_cast<Opcode>(opc);
  insn.width = r.u8();
  insn.step = r.u64();
  const size_t ne = r.u8();
  for (size_t i = 0; i < ne; ++i) insn.explicit_ops.push_back(read_operand(r));
  const size_t ni = r.u8();
  for (size_t i = 0; i < ni; ++i) insn.implicit_ops.push_back(read_operand(r));
  return insn;
}

}  // namespace minidse
