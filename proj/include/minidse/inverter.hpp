#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "minidse/slicer.hpp"
#include "minidse/solver.hpp"
#include "minidse/symex.hpp"

namespace minidse::inverter {

enum class Direction : uint8_t { Negate, IndirectAlt };
enum class BranchPolicy : uint8_t { Sequential, Random };

struct InversionTask {
  size_t branch_index = 0;
  Direction direction = Direction::Negate;
  uint64_t site = 0;
  uint64_t step = 0;
  uint64_t target = 0;  ///< IndirectAlt: the wanted jump target
  ast::Expr cond = nullptr;
};

/// One task per conditional branch, one per untaken unique target of an
/// indirect jump.  Negated conditions are built here, on the calling
/// thread, because the factory is not thread-safe.
std::vector<InversionTask> make_tasks(const symex::PathPredicate& p, BranchPolicy policy, uint64_t random_seed,
                                      ast::ExprFactory& f);

/// `<branch_index>_<site_hex>[_t<target_hex>].bin`
std::string corpus_name(const InversionTask& t);

struct CampaignOptions {
  unsigned jobs = 1;
  bool slicing = true;
  uint32_t timeout_ms = solver::kDefaultTimeoutMs;
  uint64_t solver_seed = 0;
  uint64_t max_campaign_ms = 0;  ///< 0 = unlimited
  std::string debug_dir;         ///< DIMACS dumps when non-empty
};

enum class TaskStatus : uint8_t { Sat, Unsat, Timeout, Failed, Skipped };
std::string_view to_string(TaskStatus s);

struct TaskResult {
  InversionTask task;
  TaskStatus status = TaskStatus::Failed;
  std::vector<uint8_t> input;  ///< completed model (Sat only)
  size_t kept = 0;             ///< prefix constraints in the query
  size_t query_vars = 0;
  double ms = 0;
  std::string error;
};

struct CampaignReport {
  size_t branches = 0;
  size_t queries = 0;
  size_t sat = 0;
  size_t unsat = 0;
  size_t timeouts = 0;
  size_t failed = 0;
  size_t correct = 0;  ///< filled by the caller after verification
  double wall_ms = 0;
  std::vector<TaskResult> results;  ///< task order
};

/// Solves every task on a pool of `jobs` workers.
CampaignReport run_campaign(const symex::PathPredicate& p, const std::vector<InversionTask>& tasks,
                            std::span<const uint8_t> seed, const CampaignOptions& opts);

/// Writes one file per Sat result plus `manifest.txt` (name, branch index,
/// site, step, direction, target).  Returns the written file names.
std::vector<std::string> write_corpus(const CampaignReport& r, const std::string& dir);

struct ManifestEntry {
  std::string name;
  size_t branch_index = 0;
  uint64_t site = 0;
  uint64_t step = 0;
  Direction direction = Direction::Negate;
  uint64_t target = 0;
};
std::vector<ManifestEntry> read_manifest(const std::string& dir);

}  // namespace minidse::inverter
