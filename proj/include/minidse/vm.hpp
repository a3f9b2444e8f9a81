#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "minidse/events.hpp"
#include "minidse/memory.hpp"
#include "minidse/program.hpp"

namespace minidse {

struct RunConfig {
  uint64_t quantum = 64;
  uint64_t instruction_budget = 10'000'000;
};

enum class RunStatus { Exited, Trapped, BudgetExhausted, Deadlock };

std::string_view to_string(RunStatus s);

/// Exit codes reported for abnormal termination.
inline constexpr int32_t kTrapExitCode = 139;
inline constexpr int32_t kDeadlockExitCode = 135;
inline constexpr int32_t kBudgetExitCode = 124;

/// Fixed file descriptors: 0 stdin (always empty), 1/2 captured output.
/// `open` hands out descriptors from 3 upwards, each a fresh cursor over
/// the single input file.
inline constexpr uint64_t kFirstFileFd = 3;

/// Addresses below this bound or at/above kMemLimit trap.
inline constexpr uint64_t kNullPageEnd = 0x100;
inline constexpr uint64_t kMemLimit = uint64_t{1} << 48;

enum class BranchKind : uint8_t { Conditional = 0, Indirect = 1 };

struct BranchTraceEntry {
  uint64_t site = 0;
  BranchKind kind = BranchKind::Conditional;
  bool taken = false;   ///< conditional outcome
  uint64_t target = 0;  ///< next pc (indirect: the concrete target)
  uint64_t step = 0;    ///< global executed-instruction index
  uint32_t tid = 0;

  /// Same control transfer with the same outcome.
  bool same_outcome(const BranchTraceEntry& o) const {
    if (site != o.site || kind != o.kind) return false;
    return kind == BranchKind::Conditional ? taken == o.taken : target == o.target;
  }
};

using BranchTrace = std::vector<BranchTraceEntry>;

enum class ThreadState : uint8_t { Runnable, Blocked, Finished };

struct ThreadContext {
  std::array<uint64_t, kNumRegs> regs{};
  std::array<bool, kNumFlags> flags{};
  uint64_t pc = 0;
  ThreadState state = ThreadState::Runnable;
  uint32_t join_target = 0;
  uint64_t steps = 0;
};

struct MachineState {
  std::vector<ThreadContext> threads;
  uint32_t current = 0;
  uint64_t quantum_left = 0;
  SparseMemory mem;
};

/// Round-robin successor of `state.current` among runnable threads
/// (the current thread itself comes last).  nullopt means deadlock.
std::optional<uint32_t> schedule_next(const MachineState& state);

struct RunResult {
  RunStatus status = RunStatus::Exited;
  int32_t exit_code = 0;
  BranchTrace trace;
  std::string output;
  uint64_t steps = 0;
  uint64_t thread_switches = 0;
  uint64_t instruction_events = 0;
  /// Step index of the first symbolic read, if any.
  std::optional<uint64_t> first_read_step;
  std::vector<uint64_t> per_thread_steps;
  std::string trap_reason;
};

/// Executes `program` on `input` (the content of the single input file).
/// Events are delivered to `sink` when it is set.
RunResult run_concrete(const Program& program, std::span<const uint8_t> input, const RunConfig& config,
                       const EventSink& sink = {});

/// Concrete ALU semantics shared with tests.
struct AluResult {
  uint64_t value = 0;
  bool zf = false, sf = false, cf = false, of = false;
};
AluResult alu(Opcode op, unsigned width, uint64_t a, uint64_t b);

inline uint64_t width_mask(unsigned width) { return width >= 64 ? ~uint64_t{0} : (uint64_t{1} << width) - 1; }

/// Writes `value` into the register view `r` of `parent` with x86-64 rules:
/// 32-bit views zero-extend, 8/16-bit views preserve upper bits.
uint64_t write_view(uint64_t parent, RegRef r, uint64_t value);

}  // namespace minidse
