#include "minidse/verifier.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace minidse::verifier {

std::string_view to_string(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::Correct: return "correct";
    case VerdictStatus::Divergent: return "divergent";
    case VerdictStatus::TooShort: return "too-short";
    case VerdictStatus::TargetNotInverted: return "not-inverted";
    case VerdictStatus::UnknownTarget: return "unknown-target";
  }
  return "?";
}

std::optional<size_t> find_target_index(const BranchTrace& trace, uint64_t step) {
  auto it = std::lower_bound(trace.begin(), trace.end(), step,
                             [](const BranchTraceEntry& e, uint64_t s) { return e.step < s; });
  if (it == trace.end() || it->step != step) return std::nullopt;
  return static_cast<size_t>(it - trace.begin());
}

Verdict compare_traces(const BranchTrace& seed, const RunResult& replay, size_t target_index,
                       const VerifyTarget& target) {
  Verdict v;
  v.target_index = target_index;
  const BranchTrace& got = replay.trace;
  const size_t prefix = std::min(target_index, got.size());
  for (size_t i = 0; i < prefix; ++i) {
    if (!got[i].same_outcome(seed[i])) {
      v.status = VerdictStatus::Divergent;
      v.mismatch_index = i;
      v.detail = fmt::format("branch {} at {:#x} went the other way", i, seed[i].site);
      return v;
    }
  }
  if (got.size() <= target_index) {
    if (replay.status == RunStatus::Exited) {
      v.status = VerdictStatus::TooShort;
      v.detail = fmt::format("replay ended after {} branches", got.size());
    } else {
      v.status = VerdictStatus::Divergent;
      v.mismatch_index = got.size();
      v.detail = fmt::format("replay {}: {}", to_string(replay.status), replay.trap_reason);
    }
    return v;
  }

  const BranchTraceEntry& s = seed[target_index];
  const BranchTraceEntry& g = got[target_index];
  if (g.site != s.site || g.kind != s.kind) {
    v.status = VerdictStatus::Divergent;
    v.mismatch_index = target_index;
    v.detail = fmt::format("expected branch at {:#x}, replay reached {:#x}", s.site, g.site);
    return v;
  }
  if (g.kind == BranchKind::Conditional) {
    if (g.taken == s.taken) {
      v.status = VerdictStatus::TargetNotInverted;
      v.detail = "target branch kept its direction";
    } else {
      v.status = VerdictStatus::Correct;
    }
    return v;
  }
  if (g.target == target.target) {
    v.status = VerdictStatus::Correct;
  } else if (g.target == s.target) {
    v.status = VerdictStatus::TargetNotInverted;
    v.detail = "indirect jump kept its target";
  } else {
    v.status = VerdictStatus::Divergent;
    v.mismatch_index = target_index;
    v.detail = fmt::format("indirect jump went to {:#x}, wanted {:#x}", g.target, target.target);
  }
  return v;
}

Verdict verify(const Program& prog, const BranchTrace& seed_trace, std::span<const uint8_t> candidate,
               const VerifyTarget& target, const RunConfig& cfg) {
  auto idx = find_target_index(seed_trace, target.step);
  if (!idx) {
    Verdict v;
    v.status = VerdictStatus::UnknownTarget;
    v.detail = fmt::format("no seed branch executed at step {}", target.step);
    return v;
  }
  const RunResult replay = run_concrete(prog, candidate, cfg);
  return compare_traces(seed_trace, replay, *idx, target);
}

std::string describe(const Verdict& v) {
  std::string s = fmt::format("{} target={}", to_string(v.status), v.target_index);
  if (v.status == VerdictStatus::Divergent) s += fmt::format(" at={}", v.mismatch_index);
  if (!v.detail.empty()) s += " (" + v.detail + ")";
  return s;
}

}  // namespace minidse::verifier
