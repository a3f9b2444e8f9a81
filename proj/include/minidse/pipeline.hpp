#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "minidse/inverter.hpp"
#include "minidse/symex.hpp"
#include "minidse/verifier.hpp"

namespace minidse {

struct Config {
  unsigned jobs = 1;
  uint32_t solver_timeout_ms = solver::kDefaultTimeoutMs;
  uint64_t solver_seed = 0;
  size_t max_table_size = jumptab::kDefaultMaxTableSize;
  uint64_t quantum = 64;
  inverter::BranchPolicy branch_policy = inverter::BranchPolicy::Sequential;
  uint64_t random_seed = 0;
  uint64_t instruction_budget = 10'000'000;
  uint64_t max_campaign_ms = 0;
  uint64_t max_predicate_ms = 0;

  bool slicing = true;
  bool skip = true;
  bool jumptables = true;
  bool simplify = true;
  bool context_switch = true;

  std::string program;
  std::string input;
  std::string output_dir;
  std::string debug_dir;

  RunConfig run_config() const { return {quantum, instruction_budget}; }
  symex::SymexConfig symex_config() const { return {skip, jumptables, context_switch, max_table_size, max_predicate_ms}; }
  inverter::CampaignOptions campaign_options() const {
    return {jobs, slicing, solver_timeout_ms, solver_seed, max_campaign_ms, debug_dir};
  }
  ast::Simplify simplify_level() const { return simplify ? ast::Simplify::Full : ast::Simplify::Fold; }
};

verifier::VerifyTarget verify_target(const inverter::InversionTask& t);

struct PipelineResult {
  std::unique_ptr<ast::ExprFactory> factory;  ///< owns every Expr below
  symex::TraceResult trace;
  double predicate_ms = 0;
  std::vector<inverter::InversionTask> tasks;
  inverter::CampaignReport report;
  /// Per report.results entry; set for Sat results when verification ran.
  std::vector<std::optional<verifier::Verdict>> verdicts;
};

/// Concrete run, predicate construction, campaign and (optionally)
/// verification of every generated input.
PipelineResult run_pipeline(const Program& prog, std::span<const uint8_t> seed, const Config& cfg,
                            bool verify = true);

/// Campaign over an already built predicate (the `invert` command).
void run_inversion(PipelineResult& r, const Program& prog, std::span<const uint8_t> seed, const Config& cfg,
                   bool verify);

std::string report_table(const PipelineResult& r);
/// One machine-readable line per task.
std::string report_records(const PipelineResult& r);

// --- benchmark harness ---------------------------------------------------------

struct PredicateTiming {
  double base_ms = 0;  ///< every instruction executed symbolically
  double skip_ms = 0;  ///< selector on
  uint64_t base_symbolic = 0;
  uint64_t skip_symbolic = 0;
  bool identical = false;  ///< predicates structurally equal
  double speedup = 0;      ///< median of paired base/skip ratios
  double ratio() const { return speedup; }
};

/// Times predicate construction over a recorded event stream.  Each of the
/// `reps` rounds times both modes back to back; times are medians.
PredicateTiming time_predicate(const Program& prog, std::span<const uint8_t> seed, std::span<const Event> events,
                               const Config& cfg, unsigned reps);

/// Structural equality of two predicates built in the same factory.
bool same_predicate(const symex::PathPredicate& a, const symex::PathPredicate& b);

struct BenchRow {
  std::string sample;
  unsigned jobs = 1;
  size_t correct = 0, sat = 0, queries = 0, branches = 0;
  double time_ms = 0;
  PredicateTiming predicate;
  std::string error;
};

BenchRow bench_sample(const std::string& name, const Program& prog, std::span<const uint8_t> seed,
                      const Config& cfg, unsigned reps);

std::string bench_table(const std::vector<BenchRow>& rows);
std::string bench_record(const BenchRow& row);

}  // namespace minidse
