#include "minidse/symex.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <exception>
#include <stdexcept>
#include <thread>

namespace minidse::symex {

namespace {

constexpr size_t kMaxBlockWindow = 256;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

const SymbolicMemory::Page* SymbolicMemory::find_page(uint64_t page) const {
  if (page == last_page_) return last_;
  auto it = pages_.find(page);
  if (it == pages_.end()) return nullptr;
  last_page_ = page;
  last_ = it->second.get();
  return last_;
}

void SymbolicMemory::set(uint64_t addr, Expr e) {
  const uint64_t page = addr >> kPageBits;
  Page* p = const_cast<Page*>(find_page(page));
  if (!p) {
    if (!e) return;
    auto& slot = pages_[page];
    slot = std::make_unique<Page>();
    p = slot.get();
    last_page_ = page;
    last_ = p;
  }
  Expr& b = p->bytes[addr & kPageMask];
  if (!b && e) {
    ++p->live;
    ++live_;
  } else if (b && !e) {
    --p->live;
    --live_;
  }
  b = e;
}

bool SymbolicMemory::any(uint64_t addr, uint64_t n) const {
  if (live_ == 0) return false;
  const uint64_t end = addr + n;
  while (addr < end) {
    const uint64_t page_end = std::min(end, ((addr >> kPageBits) + 1) << kPageBits);
    const Page* p = find_page(addr >> kPageBits);
    if (p && p->live) {
      for (; addr < page_end; ++addr) {
        if (p->bytes[addr & kPageMask]) return true;
      }
    }
    addr = page_end;
  }
  return false;
}

SymbolicExecutor::SymbolicExecutor(const Program& prog, std::span<const uint8_t> seed, ast::ExprFactory& factory,
                                   SymexConfig cfg)
    : prog_(prog), input_(seed.begin(), seed.end()), f_(factory), cfg_(cfg) {
  mirror_.write_bytes(prog.data_base, prog.data);
  cur_ctx_ = context_switch_on() ? &contexts_[0] : &shared_;
  cur_block_ = &blocks_[0];
  if (cfg_.max_predicate_ms) {
    deadline_ = std::chrono::steady_clock::now() + std::chrono::milliseconds(cfg_.max_predicate_ms);
  }
}

const ThreadSymbolicContext& SymbolicExecutor::context_of(uint32_t tid) const {
  static const ThreadSymbolicContext empty;
  if (!context_switch_on()) return shared_;
  auto it = contexts_.find(tid);
  return it == contexts_.end() ? empty : it->second;
}

Expr SymbolicExecutor::mem_expr(uint64_t addr) const {
  return mem_.get(addr);
}

void SymbolicExecutor::on_event(const Event& ev) {
  if (stats_.truncated) return;
  if (cfg_.max_predicate_ms && (stats_.instruction_events & 1023) == 0 &&
      std::chrono::steady_clock::now() >= deadline_) {
    stats_.truncated = true;
    return;
  }
  std::visit(Overloaded{
                 [&](const ReadSymbolicInput& e) { on_read(e); },
                 [&](const WriteSymbolicInput& e) { on_write(e); },
                 [&](const InstructionEvent& e) { on_instruction(e.insn); },
                 [&](const ThreadSwitch& e) { on_switch(e); },
                 [&](const Exit&) { finished_ = true; },
             },
             ev);
}

void SymbolicExecutor::on_read(const ReadSymbolicInput& ev) {
  for (uint64_t i = 0; i < ev.length; ++i) {
    const uint64_t off = ev.file_offset + i;
    const uint64_t addr = ev.buffer_addr + i;
    Expr e = nullptr;
    if (auto it = file_overrides_.find(off); it != file_overrides_.end()) {
      e = it->second;
    } else {
      if (off >= input_.size()) throw std::out_of_range(fmt::format("read past the seed input at offset {}", off));
      e = f_.var(static_cast<uint32_t>(off));
      vars_.insert(static_cast<uint32_t>(off));
    }
    mem_.set(addr, e->symbolic() ? e : nullptr);
    mirror_.write_byte(addr, off < input_.size() ? input_[off] : 0);
  }
}

void SymbolicExecutor::on_write(const WriteSymbolicInput& ev) {
  for (uint64_t i = 0; i < ev.length; ++i) {
    const uint64_t off = ev.file_offset + i;
    const uint64_t addr = ev.buffer_addr + i;
    const uint8_t byte = mirror_.read_byte(addr);
    Expr e = mem_expr(addr);
    file_overrides_[off] = e ? e : f_.constant(8, byte);
    if (input_.size() <= off) input_.resize(off + 1, 0);
    input_[off] = byte;
  }
}

void SymbolicExecutor::on_switch(const ThreadSwitch& ev) {
  ++stats_.context_switches;
  current_ = ev.to_tid;
  if (context_switch_on()) cur_ctx_ = &contexts_[current_];
  cur_block_ = &blocks_[current_];
}

bool SymbolicExecutor::is_symbolic_instruction(const Instruction& insn) const {
  const auto& c = ctx();
  auto reg_sym = [&](int8_t r) { return r != kNoReg && c.regs[static_cast<size_t>(r)] != nullptr; };
  auto cheap = [&](const Operand& op) {
    switch (op.kind) {
      case OperandKind::Reg: return c.regs[op.reg.id] != nullptr;
      case OperandKind::Flag: return c.flags[static_cast<size_t>(op.flag)] != nullptr;
      case OperandKind::Mem: return reg_sym(op.mem.base) || reg_sym(op.mem.index);
      case OperandKind::Imm: break;
    }
    return false;
  };
  for (const auto& op : insn.explicit_ops) {
    if (cheap(op)) return true;
  }
  for (const auto& op : insn.implicit_ops) {
    if (cheap(op)) return true;
  }
  // memory contents last: they need a lookup
  if (mem_.empty()) return false;
  for (const auto& op : insn.explicit_ops) {
    if (op.kind == OperandKind::Mem && mem_.any(op.addr, op.mem.size)) return true;
  }
  for (const auto& op : insn.implicit_ops) {
    if (op.kind == OperandKind::Mem && mem_.any(op.addr, op.mem.size)) return true;
  }
  return false;
}

void SymbolicExecutor::on_instruction(const Instruction& insn) {
  ++stats_.instruction_events;
  track_concrete(insn);

  jumptab::BlockInsn rec = jumptab::BlockInsn::from(insn);
  if (const Operand* m = rec.mem_operand()) {
    const auto& c = ctx();
    const bool sym_addr = (m->mem.base != kNoReg && c.regs[static_cast<size_t>(m->mem.base)]) ||
                          (m->mem.index != kNoReg && c.regs[static_cast<size_t>(m->mem.index)]);
    if (sym_addr) rec.mem_addr_expr = address_expr(*m);
  }

  if (!cfg_.skip || is_symbolic_instruction(insn)) {
    ++stats_.symbolic_instructions;
    exec(insn);
  } else {
    ++stats_.skipped_instructions;
    // A register target may come from a table load whose address was
    // concretized; indirect() decides from the block window.
    if (insn.opcode == Opcode::Jmp && insn.explicit_ops[0].kind == OperandKind::Reg) indirect(insn);
  }

  auto& block = *cur_block_;
  if (is_control_transfer(insn.opcode)) {
    block.clear();
  } else {
    if (block.size() >= kMaxBlockWindow) block.erase(block.begin());
    block.push_back(rec);
  }
}

void SymbolicExecutor::track_concrete(const Instruction& insn) {
  if (insn.opcode == Opcode::Store) {
    const auto& dst = insn.explicit_ops[0];
    const auto& src = insn.explicit_ops[1];
    mirror_.store(dst.addr, dst.mem.size, src.value & width_mask(src.width));
  }
}

// --- operand access ----------------------------------------------------------

Expr SymbolicExecutor::read_reg(const Operand& op) {
  Expr p = ctx().regs[op.reg.id];
  const unsigned w = op.reg.width;
  if (!p) return f_.constant(w, op.value & width_mask(w));
  return w == 64 ? p : f_.extract(w - 1, 0, p);
}

void SymbolicExecutor::write_reg(const Operand& op, Expr v) {
  auto& slot = ctx().regs[op.reg.id];
  const unsigned w = op.reg.width;
  Expr full = nullptr;
  switch (w) {
    case 64: full = v; break;
    case 32: full = f_.zext(32, v); break;
    default: {
      Expr parent = slot ? slot : f_.constant(64, op.value);
      full = f_.concat({f_.extract(63, w, parent), v});
      break;
    }
  }
  slot = full->symbolic() ? full : nullptr;
}

Expr SymbolicExecutor::address_expr(const Operand& op) {
  const auto& c = ctx();
  Expr a = f_.constant(64, static_cast<uint64_t>(op.mem.disp));
  if (op.mem.base != kNoReg) {
    Expr b = c.regs[static_cast<size_t>(op.mem.base)];
    a = f_.add(a, b ? b : f_.constant(64, op.base_value));
  }
  if (op.mem.index != kNoReg) {
    Expr i = c.regs[static_cast<size_t>(op.mem.index)];
    if (!i) i = f_.constant(64, op.index_value);
    a = f_.add(a, op.mem.scale == 1 ? i : f_.mul(i, f_.constant(64, op.mem.scale)));
  }
  return a;
}

Expr SymbolicExecutor::read_mem(const Operand& op) {
  const auto& c = ctx();
  if ((op.mem.base != kNoReg && c.regs[static_cast<size_t>(op.mem.base)]) ||
      (op.mem.index != kNoReg && c.regs[static_cast<size_t>(op.mem.index)])) {
    ++stats_.concretized_addresses;
  }
  const unsigned n = op.mem.size;
  std::vector<Expr> parts;
  parts.reserve(n);
  for (unsigned i = n; i-- > 0;) {
    Expr b = mem_expr(op.addr + i);
    parts.push_back(b ? b : f_.constant(8, (op.value >> (8 * i)) & 0xff));
  }
  return n == 1 ? parts[0] : f_.concat(parts);
}

void SymbolicExecutor::write_mem(uint64_t addr, unsigned size, Expr v) {
  for (unsigned i = 0; i < size; ++i) {
    Expr b = size == 1 ? v : f_.extract(8 * i + 7, 8 * i, v);
    mem_.set(addr + i, b->symbolic() ? b : nullptr);
  }
}

Expr SymbolicExecutor::read_src(const Operand& op) {
  switch (op.kind) {
    case OperandKind::Reg: return read_reg(op);
    case OperandKind::Mem: return read_mem(op);
    case OperandKind::Imm: return f_.constant(op.width, op.value);
    case OperandKind::Flag: break;
  }
  throw std::logic_error("flag used as a data operand");
}

Expr SymbolicExecutor::read_flag(Flag fl, const Instruction& insn) {
  if (Expr e = ctx().flags[static_cast<size_t>(fl)]) return e;
  for (const auto& op : insn.implicit_ops) {
    if (op.kind == OperandKind::Flag && op.flag == fl) return f_.boolean(op.value != 0);
  }
  throw std::logic_error(fmt::format("{} does not read the requested flag", to_string(insn)));
}

void SymbolicExecutor::set_flag(Flag fl, Expr v) {
  ctx().flags[static_cast<size_t>(fl)] = v->symbolic() ? v : nullptr;
}

void SymbolicExecutor::set_flags(Expr zf, Expr sf, Expr cf, Expr of) {
  set_flag(Flag::ZF, zf);
  set_flag(Flag::SF, sf);
  set_flag(Flag::CF, cf);
  set_flag(Flag::OF, of);
}

// --- semantics ---------------------------------------------------------------

void SymbolicExecutor::exec(const Instruction& insn) {
  const auto& ex = insn.explicit_ops;
  switch (insn.opcode) {
    case Opcode::Mov:
      write_reg(ex[0], read_src(ex[1]));
      return;
    case Opcode::Load:
      write_reg(ex[0], read_mem(ex[1]));
      return;
    case Opcode::Store:
      write_mem(ex[0].addr, ex[0].mem.size, read_src(ex[1]));
      return;
    case Opcode::Addr:
      write_reg(ex[0], address_expr(ex[1]));
      return;
    case Opcode::Add:
    case Opcode::Sub:
    case Opcode::Mul:
    case Opcode::And:
    case Opcode::Or:
    case Opcode::Xor:
    case Opcode::Shl:
    case Opcode::Shr:
    case Opcode::Sar:
    case Opcode::Not:
    case Opcode::Neg:
    case Opcode::Cmp:
    case Opcode::Test:
      alu(insn);
      return;
    case Opcode::Jz:
    case Opcode::Jnz:
    case Opcode::Jl:
    case Opcode::Jle:
    case Opcode::Jg:
    case Opcode::Jge:
    case Opcode::Jb:
    case Opcode::Jbe:
    case Opcode::Ja:
    case Opcode::Jae:
      branch(insn);
      return;
    case Opcode::Jmp:
      if (ex[0].kind != OperandKind::Imm) indirect(insn);
      return;
    case Opcode::Spawn:
    case Opcode::Open:
      ctx().regs[ex[0].reg.id] = nullptr;
      return;
    case Opcode::Read:
    case Opcode::Write:
      ctx().regs[0] = nullptr;
      return;
    case Opcode::Join:
    case Opcode::Yield:
    case Opcode::Exit:
      return;
  }
  throw std::logic_error(fmt::format("no symbolic semantics for {}", opcode_name(insn.opcode)));
}

void SymbolicExecutor::alu(const Instruction& insn) {
  const auto& ex = insn.explicit_ops;
  const unsigned w = insn.width;
  const Opcode op = insn.opcode;
  Expr a = read_src(ex[0]);
  Expr b = ex.size() > 1 ? read_src(ex[1]) : nullptr;
  Expr zero = f_.constant(w, 0);
  Expr no = f_.boolean(false);
  auto msb = [&](Expr x) { return f_.eq(f_.extract(w - 1, w - 1, x), f_.constant(1, 1)); };
  auto bit0 = [&](Expr x) { return f_.eq(f_.extract(0, 0, x), f_.constant(1, 1)); };

  Expr r = nullptr;
  Expr cf = no;
  Expr of = no;
  switch (op) {
    case Opcode::Add:
      r = f_.add(a, b);
      cf = f_.ult(r, a);
      of = msb(f_.bvand(f_.bvnot(f_.bvxor(a, b)), f_.bvxor(a, r)));
      break;
    case Opcode::Sub:
    case Opcode::Cmp:
      r = f_.sub(a, b);
      cf = f_.ult(a, b);
      of = msb(f_.bvand(f_.bvxor(a, b), f_.bvxor(a, r)));
      break;
    case Opcode::Neg:
      r = f_.neg(a);
      cf = f_.ne(a, zero);
      of = f_.eq(a, f_.constant(w, uint64_t{1} << (w - 1)));
      break;
    case Opcode::Mul: r = f_.mul(a, b); break;
    case Opcode::And:
    case Opcode::Test: r = f_.bvand(a, b); break;
    case Opcode::Or: r = f_.bvor(a, b); break;
    case Opcode::Xor: r = f_.bvxor(a, b); break;
    case Opcode::Not:
      write_reg(ex[0], f_.bvnot(a));
      return;
    case Opcode::Shl:
    case Opcode::Shr:
    case Opcode::Sar: {
      Expr cnt = f_.bvand(b, f_.constant(w, w - 1));
      Expr is_zero = f_.eq(cnt, zero);
      if (op == Opcode::Shl) {
        r = f_.shl(a, cnt);
        cf = f_.ite(is_zero, no, bit0(f_.lshr(a, f_.sub(f_.constant(w, w), cnt))));
      } else {
        r = op == Opcode::Shr ? f_.lshr(a, cnt) : f_.ashr(a, cnt);
        cf = f_.ite(is_zero, no, bit0(f_.lshr(a, f_.sub(cnt, f_.constant(w, 1)))));
      }
      break;
    }
    default:
      throw std::logic_error(fmt::format("{} is not an ALU operation", opcode_name(op)));
  }
  if (op != Opcode::Cmp && op != Opcode::Test) write_reg(ex[0], r);
  set_flags(f_.eq(r, zero), msb(r), cf, of);
}

void SymbolicExecutor::branch(const Instruction& insn) {
  auto fl = [&](Flag x) { return read_flag(x, insn); };
  Expr cond = nullptr;
  switch (insn.opcode) {
    case Opcode::Jz: cond = fl(Flag::ZF); break;
    case Opcode::Jnz: cond = f_.lnot(fl(Flag::ZF)); break;
    case Opcode::Jl: cond = f_.ne(fl(Flag::SF), fl(Flag::OF)); break;
    case Opcode::Jle: cond = f_.lor(fl(Flag::ZF), f_.ne(fl(Flag::SF), fl(Flag::OF))); break;
    case Opcode::Jg: cond = f_.land(f_.lnot(fl(Flag::ZF)), f_.eq(fl(Flag::SF), fl(Flag::OF))); break;
    case Opcode::Jge: cond = f_.eq(fl(Flag::SF), fl(Flag::OF)); break;
    case Opcode::Jb: cond = fl(Flag::CF); break;
    case Opcode::Jbe: cond = f_.lor(fl(Flag::CF), fl(Flag::ZF)); break;
    case Opcode::Ja: cond = f_.land(f_.lnot(fl(Flag::CF)), f_.lnot(fl(Flag::ZF))); break;
    case Opcode::Jae: cond = f_.lnot(fl(Flag::CF)); break;
    default: throw std::logic_error("not a conditional jump");
  }
  if (!cond->symbolic()) return;

  std::array<bool, kNumFlags> snap{};
  for (const auto& op : insn.implicit_ops) {
    if (op.kind == OperandKind::Flag) snap[static_cast<size_t>(op.flag)] = op.value != 0;
  }
  const bool taken = condition_holds(insn.opcode, snap[0], snap[1], snap[2], snap[3]);

  PathConstraint pc;
  pc.site = insn.address;
  pc.cond = taken ? cond : f_.lnot(cond);
  pc.kind = BranchKind::Conditional;
  pc.taken = taken;
  pc.target = taken ? insn.explicit_ops[0].value : insn.address + kInsnSize;
  pc.step = insn.step;
  pc.tid = current_;
  predicate_.push_back(std::move(pc));
}

void SymbolicExecutor::indirect(const Instruction& insn) {
  const Operand& t = insn.explicit_ops[0];
  const uint64_t concrete_target = t.value;
  jumptab::BlockInsn jrec = jumptab::BlockInsn::from(insn);
  if (t.kind == OperandKind::Mem) {
    const auto& c = ctx();
    if ((t.mem.base != kNoReg && c.regs[static_cast<size_t>(t.mem.base)]) ||
        (t.mem.index != kNoReg && c.regs[static_cast<size_t>(t.mem.index)])) {
      jrec.mem_addr_expr = address_expr(t);
    } else if (!is_symbolic_instruction(insn)) {
      return;
    }
  }
  const auto& block = *cur_block_;
  const jumptab::BlockInsn* src = jumptab::backward_slice(block, jrec);
  // A register target loaded through a concretized symbolic address holds a
  // concrete value but still depends on input.
  const bool symbolic_reg = t.kind == OperandKind::Reg && (ctx().regs[t.reg.id] || (src && src->mem_addr_expr));
  if (t.kind == OperandKind::Reg && !symbolic_reg) return;
  if (!cfg_.jumptables) {
    ++stats_.unresolved_indirect;
    return;
  }
  if (!src || !src->mem_addr_expr) {
    ++stats_.unresolved_indirect;
    return;
  }
  auto tbl = jumptab::parse_table(src->mem_addr, mirror_, prog_, cfg_.max_table_size);
  if (!tbl) {
    ++stats_.unresolved_indirect;
    return;
  }
  auto ic = jumptab::build_constraints(*tbl, src->mem_addr_expr, concrete_target, src->mem_addr, prog_, f_);
  ++stats_.jump_tables;
  tables_.push_back({insn.address, src->mem_addr, *tbl});
  // every entry leads to the taken target: nothing to invert
  if (ic.alt_targets.empty()) return;

  PathConstraint pc;
  pc.site = insn.address;
  pc.cond = ic.taken_cond;
  pc.kind = BranchKind::Indirect;
  pc.alt_targets = std::move(ic.alt_targets);
  pc.taken = true;
  pc.target = concrete_target;
  pc.step = insn.step;
  pc.tid = current_;
  predicate_.push_back(std::move(pc));
}

// --- drivers -------------------------------------------------------------------

TraceResult trace_and_build(const Program& prog, std::span<const uint8_t> seed, ast::ExprFactory& factory,
                            const RunConfig& run_cfg, const SymexConfig& symex_cfg) {
  EventChannel channel;
  TraceResult out;
  std::exception_ptr producer_error;
  std::thread producer([&] {
    try {
      out.run = run_concrete(prog, seed, run_cfg, [&](Event&& ev) { channel.push(std::move(ev)); });
    } catch (...) {
      producer_error = std::current_exception();
    }
    channel.close();
  });

  SymbolicExecutor sx(prog, seed, factory, symex_cfg);
  std::exception_ptr consumer_error;
  while (auto ev = channel.pop()) {
    if (consumer_error) continue;  // drain so the producer can finish
    try {
      sx.on_event(*ev);
    } catch (...) {
      consumer_error = std::current_exception();
    }
  }
  producer.join();
  if (producer_error) std::rethrow_exception(producer_error);
  if (consumer_error) std::rethrow_exception(consumer_error);

  out.stats = sx.stats();
  out.tables = sx.jump_tables();
  out.var_count = sx.var_count();
  out.predicate = sx.take_predicate();
  return out;
}

TraceResult replay_events(const Program& prog, std::span<const uint8_t> seed, std::span<const Event> events,
                          ast::ExprFactory& factory, const SymexConfig& cfg) {
  SymbolicExecutor sx(prog, seed, factory, cfg);
  for (const auto& ev : events) sx.on_event(ev);
  TraceResult out;
  out.stats = sx.stats();
  out.tables = sx.jump_tables();
  out.var_count = sx.var_count();
  out.predicate = sx.take_predicate();
  return out;
}

PathPredicate build_from_events(const Program& prog, std::span<const uint8_t> seed, std::span<const Event> events,
                                ast::ExprFactory& factory, const SymexConfig& cfg, SymexStats* stats) {
  SymbolicExecutor sx(prog, seed, factory, cfg);
  for (const auto& ev : events) sx.on_event(ev);
  if (stats) *stats = sx.stats();
  return sx.take_predicate();
}

std::string predicate_smtlib(const PathPredicate& p) {
  std::vector<Expr> conds;
  conds.reserve(p.size());
  for (const auto& c : p) conds.push_back(c.cond);
  return ast::smtlib_script(conds);
}

}  // namespace minidse::symex
