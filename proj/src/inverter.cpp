#include "minidse/inverter.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace minidse::inverter {

namespace fs = std::filesystem;

std::string_view to_string(TaskStatus s) {
  switch (s) {
    case TaskStatus::Sat: return "sat";
    case TaskStatus::Unsat: return "unsat";
    case TaskStatus::Timeout: return "timeout";
    case TaskStatus::Failed: return "failed";
    case TaskStatus::Skipped: return "skipped";
  }
  return "?";
}

std::vector<InversionTask> make_tasks(const symex::PathPredicate& p, BranchPolicy policy, uint64_t random_seed,
                                      ast::ExprFactory& f) {
  std::vector<InversionTask> tasks;
  for (size_t i = 0; i < p.size(); ++i) {
    const auto& c = p[i];
    InversionTask t;
    t.branch_index = i;
    t.site = c.site;
    t.step = c.step;
    if (c.kind == BranchKind::Conditional) {
      t.direction = Direction::Negate;
      t.cond = f.lnot(c.cond);
      tasks.push_back(t);
    } else {
      t.direction = Direction::IndirectAlt;
      for (const auto& alt : c.alt_targets) {
        t.target = alt.target;
        t.cond = alt.cond;
        tasks.push_back(t);
      }
    }
  }
  if (policy == BranchPolicy::Random) {
    std::mt19937_64 rng(random_seed);
    // Fisher-Yates with our own index draws so the order does not depend
    // on the standard library's shuffle.
    for (size_t i = tasks.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(rng() % i);
      std::swap(tasks[i - 1], tasks[j]);
    }
  }
  return tasks;
}

std::string corpus_name(const InversionTask& t) {
  if (t.direction == Direction::IndirectAlt) return fmt::format("{}_{:x}_t{:x}.bin", t.branch_index, t.site, t.target);
  return fmt::format("{}_{:x}.bin", t.branch_index, t.site);
}

namespace {

TaskResult run_task(const symex::PathPredicate& p, const InversionTask& t, std::span<const uint8_t> seed,
                    const CampaignOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  TaskResult r;
  r.task = t;
  try {
    const auto prefix = std::span<const symex::PathConstraint>(p).first(t.branch_index);
    const slicer::SlicedQuery q = opts.slicing ? slicer::slice(t.cond, prefix) : slicer::keep_all(t.cond, prefix);
    std::vector<ast::Expr> conj;
    conj.reserve(q.kept.size() + 1);
    for (size_t k : q.kept) conj.push_back(p[k].cond);
    conj.push_back(t.cond);
    r.kept = q.kept.size();
    r.query_vars = q.vars.count();

    solver::SolveOptions so;
    so.timeout_ms = opts.timeout_ms;
    so.seed = opts.solver_seed;
    if (!opts.debug_dir.empty()) {
      so.dimacs_path = (fs::path(opts.debug_dir) / (corpus_name(t) + ".cnf")).string();
    }
    const solver::SolveResult s = solver::solve(conj, so);
    switch (s.status) {
      case solver::Status::Sat:
        r.status = TaskStatus::Sat;
        r.input = slicer::complete_model(s.model, seed);
        break;
      case solver::Status::Unsat: r.status = TaskStatus::Unsat; break;
      case solver::Status::Timeout: r.status = TaskStatus::Timeout; break;
    }
  } catch (const std::exception& e) {
    r.status = TaskStatus::Failed;
    r.error = e.what();
  }
  r.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace

CampaignReport run_campaign(const symex::PathPredicate& p, const std::vector<InversionTask>& tasks,
                            std::span<const uint8_t> seed, const CampaignOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  const auto deadline = start + std::chrono::milliseconds(opts.max_campaign_ms);
  CampaignReport rep;
  rep.branches = p.size();
  rep.queries = tasks.size();
  rep.results.resize(tasks.size());

  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < tasks.size(); i = next++) {
      if (opts.max_campaign_ms && std::chrono::steady_clock::now() >= deadline) {
        rep.results[i].task = tasks[i];
        rep.results[i].status = TaskStatus::Skipped;
        continue;
      }
      rep.results[i] = run_task(p, tasks[i], seed, opts);
    }
  };
  const unsigned jobs = std::max(1U, opts.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < jobs; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (const auto& r : rep.results) {
    switch (r.status) {
      case TaskStatus::Sat: ++rep.sat; break;
      case TaskStatus::Unsat: ++rep.unsat; break;
      case TaskStatus::Timeout: ++rep.timeouts; break;
      case TaskStatus::Failed:
      case TaskStatus::Skipped: ++rep.failed; break;
    }
  }
  rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

std::vector<std::string> write_corpus(const CampaignReport& r, const std::string& dir) {
  fs::create_directories(dir);
  std::vector<std::string> names;
  std::ofstream manifest(fs::path(dir) / "manifest.txt");
  for (const auto& res : r.results) {
    if (res.status != TaskStatus::Sat) continue;
    const std::string name = corpus_name(res.task);
    std::ofstream out(fs::path(dir) / name, std::ios::binary);
    out.write(reinterpret_cast<const char*>(res.input.data()), static_cast<std::streamsize>(res.input.size()));
    manifest << fmt::format("{} {} {:x} {} {} {:x}\n", name, res.task.branch_index, res.task.site, res.task.step,
                            res.task.direction == Direction::Negate ? "negate" : "alt", res.task.target);
    names.push_back(name);
  }
  return names;
}

std::vector<ManifestEntry> read_manifest(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.txt");
  if (!in) throw std::runtime_error("no manifest.txt in " + dir);
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string dir_word;
    ls >> e.name >> e.branch_index >> std::hex >> e.site >> std::dec >> e.step >> dir_word >> std::hex >> e.target;
    if (!ls) throw std::runtime_error("malformed manifest line: " + line);
    e.direction = dir_word == "alt" ? Direction::IndirectAlt : Direction::Negate;
    out.push_back(e);
  }
  return out;
}

}  // namespace minidse::inverter
