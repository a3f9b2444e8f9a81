#include "minidse/jumptab.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <map>
#include <stdexcept>

namespace minidse::jumptab {

BlockInsn BlockInsn::from(const Instruction& insn) {
  BlockInsn b;
  b.address = insn.address;
  b.opcode = insn.opcode;
  b.num_ops = static_cast<uint8_t>(std::min<size_t>(insn.explicit_ops.size(), b.ops.size()));
  for (size_t i = 0; i < b.num_ops; ++i) {
    b.ops[i] = insn.explicit_ops[i];
    if (b.ops[i].kind == OperandKind::Mem) {
      b.mem_addr = b.ops[i].addr;
      b.mem_size = b.ops[i].mem.size;
    }
  }
  return b;
}

const Operand* BlockInsn::mem_operand() const {
  for (size_t i = 0; i < num_ops; ++i) {
    if (ops[i].kind == OperandKind::Mem) return &ops[i];
  }
  return nullptr;
}

const BlockInsn* backward_slice(std::span<const BlockInsn> block, const BlockInsn& jump) {
  if (jump.opcode != Opcode::Jmp || jump.num_ops == 0) return nullptr;
  const Operand& target = jump.ops[0];
  if (target.kind == OperandKind::Mem) return &jump;
  if (target.kind != OperandKind::Reg) return nullptr;

  std::array<bool, kNumRegs> tracked{};
  tracked[target.reg.id] = true;
  auto any_tracked = [&] { return std::any_of(tracked.begin(), tracked.end(), [](bool b) { return b; }); };
  auto track_mem_regs = [&](const Operand& m) {
    if (m.mem.base != kNoReg) tracked[static_cast<size_t>(m.mem.base)] = true;
    if (m.mem.index != kNoReg) tracked[static_cast<size_t>(m.mem.index)] = true;
  };

  for (size_t i = block.size(); i-- > 0;) {
    const BlockInsn& b = block[i];
    if (b.num_ops == 0 || b.ops[0].kind != OperandKind::Reg || !writes(b.ops[0].access)) continue;
    const uint8_t dst = b.ops[0].reg.id;
    if (!tracked[dst]) continue;
    switch (b.opcode) {
      case Opcode::Load:
        return &b;
      case Opcode::Mov:
        tracked[dst] = false;
        if (b.ops[1].kind == OperandKind::Reg) tracked[b.ops[1].reg.id] = true;
        break;
      case Opcode::Add:
      case Opcode::Sub:
      case Opcode::Shl:
      case Opcode::Shr:
      case Opcode::Sar:
        if (b.ops[1].kind == OperandKind::Reg) tracked[b.ops[1].reg.id] = true;
        break;
      case Opcode::Addr:
        tracked[dst] = false;
        track_mem_regs(b.ops[1]);
        break;
      default:
        return nullptr;
    }
    if (!any_tracked()) return nullptr;
  }
  return nullptr;
}

const TableEntry* JumpTable::find(uint64_t entry_addr) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), entry_addr,
                             [](const TableEntry& e, uint64_t a) { return e.entry_addr < a; });
  return it != entries.end() && it->entry_addr == entry_addr ? &*it : nullptr;
}

namespace {

template <typename Accept>
std::vector<TableEntry> grow(uint64_t access, unsigned stride, size_t max_entries, Accept accept) {
  std::vector<TableEntry> low, high;
  int64_t raw = 0;
  if (max_entries == 0 || !accept(access, raw)) return {};
  high.push_back({access, raw});
  bool down = true, up = true;
  uint64_t lo_addr = access, hi_addr = access;
  while ((down || up) && low.size() + high.size() < max_entries) {
    if (down) {
      if (lo_addr < stride || !accept(lo_addr - stride, raw)) {
        down = false;
      } else {
        lo_addr -= stride;
        low.push_back({lo_addr, raw});
      }
    }
    if (up && low.size() + high.size() < max_entries) {
      if (!accept(hi_addr + stride, raw)) {
        up = false;
      } else {
        hi_addr += stride;
        high.push_back({hi_addr, raw});
      }
    }
  }
  std::reverse(low.begin(), low.end());
  low.insert(low.end(), high.begin(), high.end());
  return low;
}

}  // namespace

std::optional<JumpTable> parse_table(uint64_t access_addr, const SparseMemory& mem, const Program& prog,
                                     size_t max_entries) {
  auto as_address = [&](uint64_t a, int64_t& raw) {
    const uint64_t v = mem.load(a, 8);
    raw = static_cast<int64_t>(v);
    return prog.is_code_address(v);
  };
  auto as_offset = [&](uint64_t a, int64_t& raw) {
    const auto v = static_cast<int32_t>(static_cast<uint32_t>(mem.load(a, 4)));
    raw = v;
    return v < 0;
  };

  JumpTable t;
  t.entries = grow(access_addr, 8, max_entries, as_address);
  if (t.entries.size() >= kMinTableEntries) {
    t.kind = TableKind::Address;
    t.stride = 8;
  } else {
    t.entries = grow(access_addr, 4, max_entries, as_offset);
    // Needs a same-typed neighbour; implied by the minimum size.
    if (t.entries.size() < kMinTableEntries) return std::nullopt;
    t.kind = TableKind::Offset;
    t.stride = 4;
  }
  t.base_addr = t.entries.front().entry_addr;
  return t;
}

IndirectConstraint build_constraints(JumpTable& tbl, ast::Expr sym_addr, uint64_t concrete_target,
                                     uint64_t concrete_access, const Program& prog, ast::ExprFactory& f) {
  const TableEntry* cur = tbl.find(concrete_access);
  if (!cur) throw std::logic_error(fmt::format("access {:#x} is not an entry of the parsed table", concrete_access));
  if (tbl.kind == TableKind::Offset) {
    tbl.offset_base = concrete_target - static_cast<uint64_t>(cur->raw);
  }
  auto target_of = [&](const TableEntry& e) {
    return tbl.kind == TableKind::Address ? static_cast<uint64_t>(e.raw)
                                          : tbl.offset_base + static_cast<uint64_t>(e.raw);
  };
  if (target_of(*cur) != concrete_target) {
    throw std::logic_error(fmt::format("table entry at {:#x} yields {:#x}, execution went to {:#x}",
                                       concrete_access, target_of(*cur), concrete_target));
  }

  std::map<uint64_t, std::vector<uint64_t>> groups;
  for (const auto& e : tbl.entries) {
    const uint64_t t = target_of(e);
    if (!prog.is_code_address(t)) continue;
    groups[t].push_back(e.entry_addr);
  }
  tbl.targets.clear();
  for (auto& [t, addrs] : groups) tbl.targets.push_back({t, addrs});

  const unsigned w = sym_addr->width();
  auto disjunction = [&](const std::vector<uint64_t>& addrs) {
    ast::Expr c = nullptr;
    for (uint64_t a : addrs) {
      ast::Expr eq = f.eq(sym_addr, f.constant(w, a));
      c = c ? f.lor(c, eq) : eq;
    }
    return c;
  };

  IndirectConstraint out;
  for (const auto& g : tbl.targets) {
    ast::Expr c = disjunction(g.entry_addrs);
    if (g.target == concrete_target) {
      out.taken_cond = c;
    } else {
      out.alt_targets.push_back({g.target, c});
    }
  }
  return out;
}

std::string describe(const JumpTable& tbl) {
  return fmt::format("kind={} base={:#x} stride={} entries={} targets={}{}",
                     tbl.kind == TableKind::Address ? "address" : "offset", tbl.base_addr, tbl.stride,
                     tbl.entries.size(), tbl.targets.size(),
                     tbl.kind == TableKind::Offset ? fmt::format(" offset_base={:#x}", tbl.offset_base) : "");
}

}  // namespace minidse::jumptab
