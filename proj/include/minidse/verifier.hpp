#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "minidse/program.hpp"
#include "minidse/vm.hpp"

namespace minidse::verifier {

enum class VerdictStatus { Correct, Divergent, TooShort, TargetNotInverted, UnknownTarget };
std::string_view to_string(VerdictStatus s);

/// Identifies the inverted branch: the seed-trace entry executed at `step`,
/// and for indirect jumps the intended target.
struct VerifyTarget {
  uint64_t step = 0;
  BranchKind kind = BranchKind::Conditional;
  uint64_t target = 0;
};

struct Verdict {
  VerdictStatus status = VerdictStatus::Correct;
  size_t target_index = 0;
  size_t mismatch_index = 0;  ///< Divergent only
  std::string detail;

  bool correct() const { return status == VerdictStatus::Correct; }
};

std::optional<size_t> find_target_index(const BranchTrace& trace, uint64_t step);

/// Compares a replayed trace against the seed trace: entries before
/// `target_index` must match, the entry at `target_index` must take the
/// intended direction.  Entries after it are ignored.
Verdict compare_traces(const BranchTrace& seed, const RunResult& replay, size_t target_index,
                       const VerifyTarget& target);

/// Replays `candidate` and compares.
Verdict verify(const Program& prog, const BranchTrace& seed_trace, std::span<const uint8_t> candidate,
               const VerifyTarget& target, const RunConfig& cfg = {});

std::string describe(const Verdict& v);

}  // namespace minidse::verifier
