#include "minidse/vm.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace minidse {

std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Exited: return "exited";
    case RunStatus::Trapped: return "trapped";
    case RunStatus::BudgetExhausted: return "budget-exhausted";
    case RunStatus::Deadlock: return "deadlock";
  }
  return "?";
}

std::optional<uint32_t> schedule_next(const MachineState& state) {
  const auto n = static_cast<uint32_t>(state.threads.size());
  for (uint32_t k = 1; k <= n; ++k) {
    const uint32_t tid = (state.current + k) % n;
    if (state.threads[tid].state == ThreadState::Runnable) return tid;
  }
  return std::nullopt;
}

uint64_t write_view(uint64_t parent, RegRef r, uint64_t value) {
  switch (r.width) {
    case 64: return value;
    case 32: return value & 0xffffffffULL;
    default: {
      const uint64_t mask = width_mask(r.width);
      return (parent & ~mask) | (value & mask);
    }
  }
}

AluResult alu(Opcode op, unsigned width, uint64_t a, uint64_t b) {
  const uint64_t mask = width_mask(width);
  const uint64_t sign = uint64_t{1} << (width - 1);
  a &= mask;
  b &= mask;
  AluResult r;
  auto msb = [&](uint64_t v) { return (v & sign) != 0; };
  switch (op) {
    case Opcode::Add:
      r.value = (a + b) & mask;
      r.cf = r.value < a;
      r.of = msb(a) == msb(b) && msb(r.value) != msb(a);
      break;
    case Opcode::Sub:
    case Opcode::Cmp:
      r.value = (a - b) & mask;
      r.cf = a < b;
      r.of = msb(a) != msb(b) && msb(r.value) != msb(a);
      break;
    case Opcode::Neg:
      r.value = (0 - a) & mask;
      r.cf = 0 < a;
      r.of = msb(a) && msb(r.value);
      break;
    case Opcode::Mul: r.value = (a * b) & mask; break;
    case Opcode::And:
    case Opcode::Test: r.value = a & b; break;
    case Opcode::Or: r.value = a | b; break;
    case Opcode::Xor: r.value = a ^ b; break;
    case Opcode::Not: r.value = ~a & mask; break;
    case Opcode::Shl:
    case Opcode::Shr:
    case Opcode::Sar: {
      const unsigned cnt = static_cast<unsigned>(b & (width - 1));
      if (op == Opcode::Shl) {
        r.value = (a << cnt) & mask;
        r.cf = cnt != 0 && ((a >> (width - cnt)) & 1U);
      } else if (op == Opcode::Shr) {
        r.value = a >> cnt;
        r.cf = cnt != 0 && ((a >> (cnt - 1)) & 1U);
      } else {
        const uint64_t fill = msb(a) ? mask & ~(mask >> cnt) : 0;
        r.value = ((a >> cnt) | fill) & mask;
        r.cf = cnt != 0 && ((a >> (cnt - 1)) & 1U);
      }
      break;
    }
    default: break;
  }
  r.zf = r.value == 0;
  r.sf = msb(r.value);
  return r;
}

namespace {

struct Trap {
  std::string reason;
};

struct OpenFile {
  uint64_t pos = 0;
};

class Machine {
 public:
  Machine(const Program& prog, std::span<const uint8_t> input, const RunConfig& cfg, const EventSink& sink)
      : prog_(prog), file_(input.begin(), input.end()), cfg_(cfg), sink_(sink) {
    state_.mem.write_bytes(prog.data_base, prog.data);
    ThreadContext main;
    main.pc = prog.entry;
    state_.threads.push_back(main);
    state_.quantum_left = cfg.quantum;
  }

  RunResult run() {
    try {
      while (!done_) {
        if (res_.steps >= cfg_.instruction_budget) {
          finish(RunStatus::BudgetExhausted, kBudgetExitCode, "instruction budget exhausted");
          break;
        }
        step();
      }
    } catch (const Trap& t) {
      finish(RunStatus::Trapped, kTrapExitCode, t.reason);
    }
    for (const auto& t : state_.threads) res_.per_thread_steps.push_back(t.steps);
    return std::move(res_);
  }

 private:
  ThreadContext& cur() { return state_.threads[state_.current]; }

  void emit(Event ev) {
    if (sink_) sink_(std::move(ev));
  }

  void finish(RunStatus status, int32_t code, std::string reason = {}) {
    res_.status = status;
    res_.exit_code = code;
    res_.trap_reason = std::move(reason);
    done_ = true;
    emit(Exit{code});
  }

  static void check_addr(uint64_t addr, uint64_t size) {
    if (addr < kNullPageEnd || addr >= kMemLimit || size > kMemLimit - addr) {
      throw Trap{fmt::format("invalid memory access at {:#x} (size {})", addr, size)};
    }
  }

  uint64_t reg_view(const ThreadContext& t, RegRef r) const { return t.regs[r.id] & width_mask(r.width); }

  uint64_t effective_address(const ThreadContext& t, const MemRef& m) const {
    uint64_t a = static_cast<uint64_t>(m.disp);
    if (m.base != kNoReg) a += t.regs[static_cast<size_t>(m.base)];
    if (m.index != kNoReg) a += t.regs[static_cast<size_t>(m.index)] * m.scale;
    return a;
  }

  /// Fills concrete snapshot values for every operand.
  void snapshot(Instruction& insn, const ThreadContext& t) {
    auto fill = [&](Operand& op) {
      switch (op.kind) {
        case OperandKind::Reg: op.value = t.regs[op.reg.id]; break;
        case OperandKind::Flag: op.value = t.flags[static_cast<size_t>(op.flag)] ? 1 : 0; break;
        case OperandKind::Imm: break;
        case OperandKind::Mem:
          if (op.mem.base != kNoReg) op.base_value = t.regs[static_cast<size_t>(op.mem.base)];
          if (op.mem.index != kNoReg) op.index_value = t.regs[static_cast<size_t>(op.mem.index)];
          op.addr = effective_address(t, op.mem);
          op.value = op.mem.size <= 8 && op.mem.size > 0 ? state_.mem.load(op.addr, op.mem.size) : 0;
          break;
      }
    };
    for (auto& op : insn.explicit_ops) fill(op);
    if (insn.opcode == Opcode::Read || insn.opcode == Opcode::Write) {
      // Implicit buffer operand: address and length come from the explicit operands.
      auto& buf = insn.implicit_ops[1];
      buf.addr = insn.explicit_ops[1].kind == OperandKind::Reg ? insn.explicit_ops[1].value
                                                                 : insn.explicit_ops[1].value;
      const uint64_t len = insn.explicit_ops[2].value;
      buf.mem.size = static_cast<uint32_t>(std::min<uint64_t>(len, 0xffffffffULL));
      buf.mem.disp = static_cast<int64_t>(buf.addr);
      buf.width = 0;
    }
    for (auto& op : insn.implicit_ops) {
      if (op.kind != OperandKind::Mem) fill(op);
    }
  }

  uint64_t src_value(const Operand& op) const {
    // Snapshot already holds the parent register value or the immediate.
    if (op.kind == OperandKind::Reg) return op.value & width_mask(op.reg.width);
    if (op.kind == OperandKind::Mem) return op.value;
    return op.value;
  }

  void write_reg(ThreadContext& t, RegRef r, uint64_t v) { t.regs[r.id] = write_view(t.regs[r.id], r, v); }

  void set_flags(ThreadContext& t, const AluResult& r) {
    t.flags[static_cast<size_t>(Flag::ZF)] = r.zf;
    t.flags[static_cast<size_t>(Flag::SF)] = r.sf;
    t.flags[static_cast<size_t>(Flag::CF)] = r.cf;
    t.flags[static_cast<size_t>(Flag::OF)] = r.of;
  }

  void step() {
    ThreadContext& t = cur();
    const Instruction* code = prog_.at(t.pc);
    if (!code) throw Trap{fmt::format("pc {:#x} is not a code address", t.pc)};
    Instruction insn = *code;
    insn.step = res_.steps;
    snapshot(insn, t);
    if (gating_) {
      ++res_.instruction_events;
      emit(InstructionEvent{insn});
    }
    ++res_.steps;
    ++t.steps;
    uint64_t next_pc = t.pc + kInsnSize;
    bool reschedule = false;

    const auto& ex = insn.explicit_ops;
    const unsigned w = insn.width;
    switch (insn.opcode) {
      case Opcode::Mov:
        write_reg(t, ex[0].reg, src_value(ex[1]));
        break;
      case Opcode::Load:
        check_addr(ex[1].addr, ex[1].mem.size);
        write_reg(t, ex[0].reg, ex[1].value);
        break;
      case Opcode::Store:
        check_addr(ex[0].addr, ex[0].mem.size);
        state_.mem.store(ex[0].addr, ex[0].mem.size, src_value(ex[1]));
        break;
      case Opcode::Addr:
        write_reg(t, ex[0].reg, ex[1].addr);
        break;
      case Opcode::Add:
      case Opcode::Sub:
      case Opcode::Mul:
      case Opcode::And:
      case Opcode::Or:
      case Opcode::Xor:
      case Opcode::Shl:
      case Opcode::Shr:
      case Opcode::Sar: {
        const AluResult r = alu(insn.opcode, w, src_value(ex[0]), src_value(ex[1]));
        write_reg(t, ex[0].reg, r.value);
        set_flags(t, r);
        break;
      }
      case Opcode::Not:
        write_reg(t, ex[0].reg, alu(Opcode::Not, w, src_value(ex[0]), 0).value);
        break;
      case Opcode::Neg: {
        const AluResult r = alu(Opcode::Neg, w, src_value(ex[0]), 0);
        write_reg(t, ex[0].reg, r.value);
        set_flags(t, r);
        break;
      }
      case Opcode::Cmp:
      case Opcode::Test:
        set_flags(t, alu(insn.opcode, w, src_value(ex[0]), src_value(ex[1])));
        break;
      case Opcode::Jmp:
        if (ex[0].kind == OperandKind::Imm) {
          next_pc = ex[0].value;
        } else {
          if (ex[0].kind == OperandKind::Mem) check_addr(ex[0].addr, 8);
          next_pc = src_value(ex[0]);
          res_.trace.push_back({insn.address, BranchKind::Indirect, true, next_pc, insn.step, state_.current});
        }
        break;
      case Opcode::Spawn: {
        ThreadContext nt;
        nt.regs[0] = src_value(ex[2]);
        nt.pc = ex[1].value;
        const auto tid = static_cast<uint32_t>(state_.threads.size());
        write_reg(t, ex[0].reg, tid);
        state_.threads.push_back(nt);  // invalidates `t`
        break;
      }
      case Opcode::Join: {
        const uint64_t target = src_value(ex[0]);
        if (target >= state_.threads.size()) throw Trap{fmt::format("join on unknown thread {}", target)};
        if (state_.threads[target].state != ThreadState::Finished) {
          t.state = ThreadState::Blocked;
          t.join_target = static_cast<uint32_t>(target);
          reschedule = true;
        }
        break;
      }
      case Opcode::Yield:
        reschedule = true;
        break;
      case Opcode::Open:
        write_reg(t, ex[0].reg, kFirstFileFd + files_.size());
        files_.emplace_back();
        break;
      case Opcode::Read:
        sys_read(t, insn);
        break;
      case Opcode::Write:
        sys_write(t, insn);
        break;
      case Opcode::Exit: {
        const auto code = static_cast<int32_t>(src_value(ex[0]));
        if (state_.current == 0) {
          cur().pc = next_pc;
          finish(RunStatus::Exited, code);
          return;
        }
        t.state = ThreadState::Finished;
        for (auto& other : state_.threads) {
          if (other.state == ThreadState::Blocked && other.join_target == state_.current) {
            other.state = ThreadState::Runnable;
          }
        }
        reschedule = true;
        break;
      }
      default: {  // conditional jumps
        const auto& f = cur().flags;
        const bool taken = condition_holds(insn.opcode, f[0], f[1], f[2], f[3]);
        if (taken) next_pc = ex[0].value;
        res_.trace.push_back({insn.address, BranchKind::Conditional, taken, next_pc, insn.step, state_.current});
        break;
      }
    }
    cur().pc = next_pc;

    if (!reschedule && --state_.quantum_left == 0) reschedule = true;
    if (reschedule) switch_thread();
  }

  void switch_thread() {
    state_.quantum_left = cfg_.quantum;
    auto next = schedule_next(state_);
    if (!next) {
      res_.status = RunStatus::Deadlock;
      res_.exit_code = kDeadlockExitCode;
      res_.trap_reason = "deadlock: no runnable thread";
      done_ = true;
      emit(Exit{kDeadlockExitCode});
      return;
    }
    if (*next != state_.current) {
      emit(ThreadSwitch{state_.current, *next});
      ++res_.thread_switches;
      state_.current = *next;
    }
  }

  OpenFile* file_for(uint64_t fd) {
    if (fd < kFirstFileFd || fd - kFirstFileFd >= files_.size()) return nullptr;
    return &files_[fd - kFirstFileFd];
  }

  void sys_read(ThreadContext& t, const Instruction& insn) {
    const uint64_t fd = src_value(insn.explicit_ops[0]);
    const uint64_t buf = src_value(insn.explicit_ops[1]);
    const uint64_t len = src_value(insn.explicit_ops[2]);
    OpenFile* f = file_for(fd);
    if (!f) {
      t.regs[0] = fd == 0 ? 0 : ~uint64_t{0};
      return;
    }
    const uint64_t avail = f->pos < file_.size() ? file_.size() - f->pos : 0;
    const uint64_t n = std::min(len, avail);
    if (n > 0) {
      check_addr(buf, n);
      state_.mem.write_bytes(buf, std::span<const uint8_t>(file_).subspan(f->pos, n));
      if (!gating_) {
        gating_ = true;
        res_.first_read_step = insn.step;
      }
      emit(ReadSymbolicInput{buf, n, f->pos});
    }
    f->pos += n;
    t.regs[0] = n;
  }

  void sys_write(ThreadContext& t, const Instruction& insn) {
    const uint64_t fd = src_value(insn.explicit_ops[0]);
    const uint64_t buf = src_value(insn.explicit_ops[1]);
    const uint64_t len = src_value(insn.explicit_ops[2]);
    if (len > 0) check_addr(buf, len);
    if (fd == 1 || fd == 2) {
      for (uint64_t i = 0; i < len; ++i) res_.output.push_back(static_cast<char>(state_.mem.read_byte(buf + i)));
      t.regs[0] = len;
      return;
    }
    OpenFile* f = file_for(fd);
    if (!f) {
      t.regs[0] = ~uint64_t{0};
      return;
    }
    if (file_.size() < f->pos + len) file_.resize(f->pos + len, 0);
    for (uint64_t i = 0; i < len; ++i) file_[f->pos + i] = state_.mem.read_byte(buf + i);
    if (len > 0) emit(WriteSymbolicInput{buf, len, f->pos});
    f->pos += len;
    t.regs[0] = len;
  }

  const Program& prog_;
  std::vector<uint8_t> file_;
  const RunConfig& cfg_;
  const EventSink& sink_;
  MachineState state_;
  std::vector<OpenFile> files_;
  RunResult res_;
  bool gating_ = false;
  bool done_ = false;
};

}  // namespace

RunResult run_concrete(const Program& program, std::span<const uint8_t> input, const RunConfig& config,
                       const EventSink& sink) {
  RunConfig cfg = config;
  if (cfg.quantum == 0) cfg.quantum = 1;
  return Machine(program, input, cfg, sink).run();
}

}  // namespace minidse
