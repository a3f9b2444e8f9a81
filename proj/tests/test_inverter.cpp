#include "doctest.h"

#include <filesystem>
#include <set>

#include "minidse/inverter.hpp"
#include "minidse/pipeline.hpp"
#include "minidse/verifier.hpp"
#include "support.hpp"

using namespace minidse;
using ast::Expr;
namespace fs = std::filesystem;

namespace {

symex::PathConstraint conditional(uint64_t site, Expr cond, uint64_t step) {
  symex::PathConstraint c;
  c.site = site;
  c.cond = cond;
  c.step = step;
  c.taken = true;
  return c;
}

uint64_t jcc_after(const Program& p, const std::string& label) {
  for (uint64_t a = p.label(label); a < p.code_end(); a += kInsnSize) {
    if (is_conditional_jump(p.at(a)->opcode)) return a;
  }
  return 0;
}

fs::path scratch_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("minidse_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::map<std::string, std::vector<uint8_t>> read_dir(const fs::path& d) {
  std::map<std::string, std::vector<uint8_t>> out;
  for (const auto& e : fs::directory_iterator(d)) out[e.path().filename().string()] = testing::read_bytes(e.path());
  return out;
}

struct LineCampaign {
  PipelineResult result;
  size_t task = 0;
};

/// Pipeline on the slicing port with a zero seed; `task` is the line-15 task.
LineCampaign slicing_campaign(bool slicing, unsigned jobs = 1) {
  const Program p = testing::load_sample("slicing");
  const std::vector<uint8_t> seed(24, 0);
  Config cfg;
  cfg.slicing = slicing;
  cfg.jobs = jobs;
  LineCampaign c{run_pipeline(p, seed, cfg), 0};
  const uint64_t site = jcc_after(p, "line15");
  for (size_t i = 0; i < c.result.report.results.size(); ++i) {
    if (c.result.report.results[i].task.site == site) c.task = i;
  }
  return c;
}

}  // namespace

TEST_SUITE("inverter") {

TEST_CASE("tasks for conditionals") {
  ast::ExprFactory f;
  symex::PathPredicate p;
  for (uint32_t i = 0; i < 3; ++i) p.push_back(conditional(0x400 + 4 * i, f.ult(f.var(i), f.constant(8, 9)), 10 * i));
  const auto tasks = inverter::make_tasks(p, inverter::BranchPolicy::Sequential, 0, f);
  REQUIRE(tasks.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(tasks[i].branch_index == i);
    CHECK(tasks[i].direction == inverter::Direction::Negate);
    CHECK(tasks[i].cond == f.lnot(p[i].cond));
    CHECK(tasks[i].step == p[i].step);
  }
  CHECK(inverter::corpus_name(tasks[1]) == "1_404.bin");
}

TEST_CASE("tasks for an indirect jump") {
  ast::ExprFactory f;
  symex::PathConstraint c;
  c.kind = BranchKind::Indirect;
  c.site = 0x420;
  c.target = 0x500;
  c.cond = f.eq(f.var(0), f.constant(8, 0));
  for (uint64_t k = 1; k < 8; ++k) c.alt_targets.push_back({0x500 + 8 * k, f.eq(f.var(0), f.constant(8, k))});
  const auto tasks = inverter::make_tasks({c}, inverter::BranchPolicy::Sequential, 0, f);
  REQUIRE(tasks.size() == 7);
  for (size_t k = 0; k < 7; ++k) {
    CHECK(tasks[k].direction == inverter::Direction::IndirectAlt);
    CHECK(tasks[k].target == c.alt_targets[k].target);
  }
  CHECK(inverter::corpus_name(tasks[0]) == "0_420_t508.bin");
}

TEST_CASE("random policy is reproducible") {
  ast::ExprFactory f;
  symex::PathPredicate p;
  for (uint32_t i = 0; i < 40; ++i) p.push_back(conditional(0x400 + 4 * i, f.ult(f.var(i), f.constant(8, 9)), i));
  auto order = [&](uint64_t seed) {
    std::vector<size_t> out;
    for (const auto& t : inverter::make_tasks(p, inverter::BranchPolicy::Random, seed, f)) out.push_back(t.branch_index);
    return out;
  };
  CHECK(order(5) == order(5));
  CHECK(order(5) != order(6));
  auto sorted = order(5);
  std::sort(sorted.begin(), sorted.end());
  for (size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
}

TEST_CASE("unsat direction writes nothing") {
  ast::ExprFactory f;
  const symex::PathPredicate p{conditional(0x400, f.ule(f.var(0), f.constant(8, 0xff)), 1),
                               conditional(0x404, f.ult(f.var(1), f.constant(8, 3)), 2)};
  const auto tasks = inverter::make_tasks(p, inverter::BranchPolicy::Sequential, 0, f);
  const std::vector<uint8_t> seed{0, 0};
  const auto rep = inverter::run_campaign(p, tasks, seed, {});
  CHECK(rep.queries == 2);
  CHECK(rep.branches == 2);
  CHECK(rep.unsat == 1);
  CHECK(rep.sat == 1);
  CHECK(rep.results[0].status == inverter::TaskStatus::Unsat);
  const auto dir = scratch_dir("unsat");
  const auto names = inverter::write_corpus(rep, dir.string());
  CHECK(names == std::vector<std::string>{"1_404.bin"});
  const auto manifest = inverter::read_manifest(dir.string());
  REQUIRE(manifest.size() == 1);
  CHECK(manifest[0].branch_index == 1);
  CHECK(manifest[0].site == 0x404);
  CHECK(manifest[0].step == 2);
  fs::remove_all(dir);
}

TEST_CASE("worker count does not change the corpus") {
  const auto one = slicing_campaign(true, 1);
  const auto eight = slicing_campaign(true, 8);
  const auto d1 = scratch_dir("jobs1"), d8 = scratch_dir("jobs8");
  inverter::write_corpus(one.result.report, d1.string());
  inverter::write_corpus(eight.result.report, d8.string());
  CHECK(read_dir(d1) == read_dir(d8));
  CHECK(read_dir(d1).size() > 1);
  fs::remove_all(d1);
  fs::remove_all(d8);
}

TEST_CASE("slicing port campaign reaches OK") {
  const auto c = slicing_campaign(true);
  const auto& res = c.result.report.results[c.task];
  REQUIRE(res.status == inverter::TaskStatus::Sat);
  const Program p = testing::load_sample("slicing");
  CHECK(run_concrete(p, res.input, {}).output == "OK\n");
  // slicing leaves b[0] and b[2] at their seed values
  for (uint32_t i : {0U, 1U, 2U, 3U, 8U, 9U, 10U, 11U}) CHECK(res.input[i] == 0);
  CHECK(res.kept == 4);
}

}

TEST_SUITE("verifier") {

TEST_CASE("seed replay is not an inversion") {
  const Program p = testing::load_sample("slicing");
  const std::vector<uint8_t> seed(24, 0);
  const RunResult r = run_concrete(p, seed, {});
  for (const auto& e : r.trace) {
    const auto v = verifier::verify(p, r.trace, seed, {e.step, e.kind, e.target});
    CHECK(v.status == verifier::VerdictStatus::TargetNotInverted);
  }
  CHECK(verifier::verify(p, r.trace, seed, {999999, BranchKind::Conditional, 0}).status ==
        verifier::VerdictStatus::UnknownTarget);
}

TEST_CASE("sliced and unsliced line-15 inputs") {
  const Program p = testing::load_sample("slicing");
  const uint64_t line9 = jcc_after(p, "line9");

  const auto sliced = slicing_campaign(true);
  REQUIRE(sliced.result.verdicts[sliced.task].has_value());
  CHECK(sliced.result.verdicts[sliced.task]->status == verifier::VerdictStatus::Correct);

  const auto whole = slicing_campaign(false);
  const auto& v = whole.result.verdicts[whole.task];
  REQUIRE(v.has_value());
  CHECK(v->status == verifier::VerdictStatus::Divergent);
  CHECK(whole.result.trace.run.trace[v->mismatch_index].site == line9);
}

TEST_CASE("trace comparison cases") {
  BranchTrace seed{{0x400, BranchKind::Conditional, true, 0x410, 5, 0},
                   {0x420, BranchKind::Conditional, false, 0x424, 9, 0},
                   {0x430, BranchKind::Indirect, false, 0x500, 12, 0}};
  CHECK(verifier::find_target_index(seed, 9) == 1U);
  CHECK_FALSE(verifier::find_target_index(seed, 10).has_value());

  RunResult replay;
  replay.trace = seed;
  replay.trace[1].taken = true;
  CHECK(verifier::compare_traces(seed, replay, 1, {9, BranchKind::Conditional, 0}).correct());
  auto v = verifier::compare_traces(seed, replay, 2, {12, BranchKind::Indirect, 0x600});
  CHECK(v.status == verifier::VerdictStatus::Divergent);
  CHECK(v.mismatch_index == 1);

  replay.trace = seed;
  replay.trace[2].target = 0x600;
  CHECK(verifier::compare_traces(seed, replay, 2, {12, BranchKind::Indirect, 0x600}).correct());
  replay.trace[2].target = 0x700;
  CHECK(verifier::compare_traces(seed, replay, 2, {12, BranchKind::Indirect, 0x600}).status ==
        verifier::VerdictStatus::Divergent);

  replay.trace.resize(1);
  replay.status = RunStatus::Exited;
  CHECK(verifier::compare_traces(seed, replay, 2, {12, BranchKind::Indirect, 0x600}).status ==
        verifier::VerdictStatus::TooShort);
  replay.status = RunStatus::Trapped;
  CHECK(verifier::compare_traces(seed, replay, 2, {12, BranchKind::Indirect, 0x600}).status ==
        verifier::VerdictStatus::Divergent);
}

}

TEST_SUITE("pipeline") {

TEST_CASE("slicing port report") {
  const auto c = slicing_campaign(true);
  const auto& rep = c.result.report;
  CHECK(rep.branches == 7);
  CHECK(rep.queries == 7);
  CHECK(rep.correct >= 1);
  CHECK(rep.correct <= rep.sat);
  const std::string table = report_table(c.result);
  CHECK(table.find("Correct") != std::string::npos);
  CHECK(report_records(c.result).find("verdict=correct") != std::string::npos);
}

TEST_CASE("skip mode does not change the corpus") {
  for (const auto& stem : testing::sample_stems()) {
    CAPTURE(stem);
    const Program p = testing::load_sample(stem);
    const auto seed = testing::sample_seed(stem);
    Config on, off;
    off.skip = false;
    const auto a = run_pipeline(p, seed, on, false);
    const auto b = run_pipeline(p, seed, off, false);
    const auto da = scratch_dir("skip_on"), db = scratch_dir("skip_off");
    inverter::write_corpus(a.report, da.string());
    inverter::write_corpus(b.report, db.string());
    CHECK(read_dir(da) == read_dir(db));
    CHECK(a.trace.stats.symbolic_instructions < b.trace.stats.symbolic_instructions);
    fs::remove_all(da);
    fs::remove_all(db);
  }
}

TEST_CASE("jump tables can be turned off") {
  const Program p = testing::load_sample("switch8");
  const auto seed = testing::sample_seed("switch8");
  Config on, off;
  off.jumptables = false;
  const auto a = run_pipeline(p, seed, on, false);
  const auto b = run_pipeline(p, seed, off, false);
  auto alt_count = [](const PipelineResult& r) {
    size_t n = 0;
    for (const auto& res : r.report.results) n += res.task.direction == inverter::Direction::IndirectAlt;
    return n;
  };
  CHECK(alt_count(a) == 6);
  CHECK(alt_count(b) == 0);
  CHECK(b.trace.stats.unresolved_indirect == 1);
}

TEST_CASE("predicate timing reports both modes") {
  const Program p = testing::load_sample("parse_img");
  const auto seed = testing::sample_seed("parse_img");
  std::vector<Event> events;
  run_concrete(p, seed, {}, [&](Event&& e) { events.push_back(std::move(e)); });
  const auto t = time_predicate(p, seed, events, Config{}, 1);
  CHECK(t.identical);
  CHECK(t.base_ms > 0);
  CHECK(t.skip_ms > 0);
  CHECK(t.skip_symbolic < t.base_symbolic);
}

}
