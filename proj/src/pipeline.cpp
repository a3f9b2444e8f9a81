#include "minidse/pipeline.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <limits>

namespace minidse {

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

// CPU time of the calling thread; unaffected by preemption.
double thread_cpu_ms() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) * 1e3 + static_cast<double>(ts.tv_nsec) / 1e6;
}

}  // namespace

verifier::VerifyTarget verify_target(const inverter::InversionTask& t) {
  verifier::VerifyTarget v;
  v.step = t.step;
  v.kind = t.direction == inverter::Direction::Negate ? BranchKind::Conditional : BranchKind::Indirect;
  v.target = t.target;
  return v;
}

void run_inversion(PipelineResult& r, const Program& prog, std::span<const uint8_t> seed, const Config& cfg,
                   bool verify) {
  r.tasks = inverter::make_tasks(r.trace.predicate, cfg.branch_policy, cfg.random_seed, *r.factory);
  r.report = inverter::run_campaign(r.trace.predicate, r.tasks, seed, cfg.campaign_options());
  r.verdicts.assign(r.report.results.size(), std::nullopt);
  if (!verify) return;
  for (size_t i = 0; i < r.report.results.size(); ++i) {
    const auto& res = r.report.results[i];
    if (res.status != inverter::TaskStatus::Sat) continue;
    r.verdicts[i] = verifier::verify(prog, r.trace.run.trace, res.input, verify_target(res.task), cfg.run_config());
    if (r.verdicts[i]->correct()) ++r.report.correct;
  }
}

PipelineResult run_pipeline(const Program& prog, std::span<const uint8_t> seed, const Config& cfg, bool verify) {
  PipelineResult r;
  r.factory = std::make_unique<ast::ExprFactory>(cfg.simplify_level());
  const auto start = std::chrono::steady_clock::now();
  r.trace = symex::trace_and_build(prog, seed, *r.factory, cfg.run_config(), cfg.symex_config());
  r.predicate_ms = elapsed_ms(start);
  run_inversion(r, prog, seed, cfg, verify);
  return r;
}

std::string report_table(const PipelineResult& r) {
  const auto& rep = r.report;
  std::string out;
  out += fmt::format("{:>8} {:>6} {:>8} {:>9} {:>10} {:>12}\n", "Correct", "SAT", "Queries", "Branches", "Time(ms)",
                     "Pred(ms)");
  out += fmt::format("{:>8} {:>6} {:>8} {:>9} {:>10.1f} {:>12.1f}\n", rep.correct, rep.sat, rep.queries,
                     rep.branches, rep.wall_ms, r.predicate_ms);
  const auto& st = r.trace.stats;
  out += fmt::format(
      "events={} symbolic={} skipped={} concretized={} switches={} jump_tables={} unresolved_indirect={} vars={}{}\n",
      st.instruction_events, st.symbolic_instructions, st.skipped_instructions, st.concretized_addresses,
      st.context_switches, st.jump_tables, st.unresolved_indirect, r.trace.var_count,
      st.truncated ? " truncated=1" : "");
  if (rep.unsat || rep.timeouts || rep.failed) {
    out += fmt::format("unsat={} timeouts={} failed={}\n", rep.unsat, rep.timeouts, rep.failed);
  }
  return out;
}

std::string report_records(const PipelineResult& r) {
  std::string out;
  for (size_t i = 0; i < r.report.results.size(); ++i) {
    const auto& res = r.report.results[i];
    const auto& t = res.task;
    std::string verdict = "-";
    if (i < r.verdicts.size() && r.verdicts[i]) verdict = std::string(verifier::to_string(r.verdicts[i]->status));
    out += fmt::format("task index={} site={:#x} direction={} target={:#x} status={} kept={} vars={} ms={:.2f} "
                       "verdict={}{}\n",
                       t.branch_index, t.site, t.direction == inverter::Direction::Negate ? "negate" : "alt",
                       t.target, inverter::to_string(res.status), res.kept, res.query_vars, res.ms, verdict,
                       res.error.empty() ? "" : " error=\"" + res.error + "\"");
  }
  return out;
}

bool same_predicate(const symex::PathPredicate& a, const symex::PathPredicate& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    const auto& x = a[i];
    const auto& y = b[i];
    if (x.site != y.site || x.kind != y.kind || x.cond != y.cond || x.taken != y.taken || x.target != y.target ||
        x.step != y.step || x.alt_targets.size() != y.alt_targets.size()) {
      return false;
    }
    for (size_t k = 0; k < x.alt_targets.size(); ++k) {
      if (x.alt_targets[k].target != y.alt_targets[k].target || x.alt_targets[k].cond != y.alt_targets[k].cond) {
        return false;
      }
    }
  }
  return true;
}

PredicateTiming time_predicate(const Program& prog, std::span<const uint8_t> seed, std::span<const Event> events,
                               const Config& cfg, unsigned reps) {
  PredicateTiming t;
  symex::SymexConfig skip_cfg = cfg.symex_config();
  skip_cfg.skip = true;
  symex::SymexConfig base_cfg = skip_cfg;
  base_cfg.skip = false;

  {
    ast::ExprFactory shared(cfg.simplify_level());
    symex::SymexStats sb, ss;
    const auto pb = symex::build_from_events(prog, seed, events, shared, base_cfg, &sb);
    const auto ps = symex::build_from_events(prog, seed, events, shared, skip_cfg, &ss);
    t.identical = same_predicate(pb, ps);
    t.base_symbolic = sb.symbolic_instructions;
    t.skip_symbolic = ss.symbolic_instructions;
  }

  // Single builds of desk-scale programs take tens of microseconds, so each
  // sample is a batch of builds lasting at least kBatchMs.
  constexpr double kBatchMs = 5.0;
  auto build_ms = [&](const symex::SymexConfig& sc, unsigned n) {
    const double start = thread_cpu_ms();
    for (unsigned k = 0; k < n; ++k) {
      ast::ExprFactory f(cfg.simplify_level());
      auto p = symex::build_from_events(prog, seed, events, f, sc);
    }
    return (thread_cpu_ms() - start) / n;
  };
  const double probe = std::max(1e-3, build_ms(base_cfg, 1));
  const auto batch = static_cast<unsigned>(std::clamp(kBatchMs / probe, 1.0, 10000.0));

  // paired rounds: slow drift on the host hits both halves of a pair alike
  std::vector<double> base, skip, ratios;
  for (unsigned i = 0; i < std::max(1U, reps); ++i) {
    // alternate the order so neither mode always runs on a warmer cache
    double b = 0, s = 0;
    if (i % 2 == 0) {
      b = build_ms(base_cfg, batch);
      s = build_ms(skip_cfg, batch);
    } else {
      s = build_ms(skip_cfg, batch);
      b = build_ms(base_cfg, batch);
    }
    base.push_back(b);
    skip.push_back(s);
    ratios.push_back(s > 0 ? b / s : 0);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
  };
  t.base_ms = median(base);
  t.skip_ms = median(skip);
  t.speedup = median(ratios);
  return t;
}

BenchRow bench_sample(const std::string& name, const Program& prog, std::span<const uint8_t> seed,
                      const Config& cfg, unsigned reps) {
  BenchRow row;
  row.sample = name;
  row.jobs = cfg.jobs;
  try {
    std::vector<Event> events;
    run_concrete(prog, seed, cfg.run_config(), [&](Event&& e) { events.push_back(std::move(e)); });
    row.predicate = time_predicate(prog, seed, events, cfg, reps);

    double best = std::numeric_limits<double>::infinity();
    for (unsigned i = 0; i < std::max(1U, reps); ++i) {
      PipelineResult r = run_pipeline(prog, seed, cfg, /*verify=*/i == 0);
      best = std::min(best, r.report.wall_ms);
      if (i == 0) {
        row.correct = r.report.correct;
        row.sat = r.report.sat;
        row.queries = r.report.queries;
        row.branches = r.report.branches;
      }
    }
    row.time_ms = best;
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

std::string bench_table(const std::vector<BenchRow>& rows) {
  std::string out = fmt::format("{:<16} {:>4} {:>8} {:>5} {:>8} {:>9} {:>10} {:>10} {:>10} {:>6}\n", "Sample", "Jobs",
                                "Correct", "SAT", "Queries", "Branches", "Time(ms)", "Base(ms)", "Skip(ms)", "X");
  for (const auto& r : rows) {
    if (!r.error.empty()) {
      out += fmt::format("{:<16} {:>4} error: {}\n", r.sample, r.jobs, r.error);
      continue;
    }
    out += fmt::format("{:<16} {:>4} {:>8} {:>5} {:>8} {:>9} {:>10.2f} {:>10.3f} {:>10.3f} {:>6.2f}\n", r.sample,
                       r.jobs, r.correct, r.sat, r.queries, r.branches, r.time_ms, r.predicate.base_ms,
                       r.predicate.skip_ms, r.predicate.ratio());
  }
  return out;
}

std::string bench_record(const BenchRow& r) {
  return fmt::format(
      "bench sample={} jobs={} correct={} sat={} queries={} branches={} time_ms={:.3f} base_ms={:.4f} "
      "skip_ms={:.4f} ratio={:.3f} base_symbolic={} skip_symbolic={} identical={}{}",
      r.sample, r.jobs, r.correct, r.sat, r.queries, r.branches, r.time_ms, r.predicate.base_ms, r.predicate.skip_ms,
      r.predicate.ratio(), r.predicate.base_symbolic, r.predicate.skip_symbolic, r.predicate.identical ? 1 : 0,
      r.error.empty() ? "" : " error=\"" + r.error + "\"");
}

}  // namespace minidse
