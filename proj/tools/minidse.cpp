// minidse command-line front end.
#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>

#include "minidse/pipeline.hpp"

namespace fs = std::filesystem;
using namespace minidse;

namespace {

// Exit codes, one per failing stage.
enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kAsmError = 2,
  kRunError = 3,
  kSymexError = 4,
  kSolveError = 5,
  kVerifyError = 6,
  kIoError = 7,
};

struct StageError : std::runtime_error {
  StageError(int code, std::string stage, const std::string& msg)
      : std::runtime_error(msg), code(code), stage(std::move(stage)) {}
  int code;
  std::string stage;
};

template <typename F>
auto stage(int code, const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(code, name, e.what());
  }
}

std::string escaped(std::string_view s) {
  std::string out;
  for (unsigned char c : s) {
    if (c == '\\' || c == '"') {
      out += '\\';
      out += static_cast<char>(c);
    } else if (c == '\n') {
      out += "\\n";
    } else if (c < 0x20 || c >= 0x7f) {
      out += fmt::format("\\x{:02x}", c);
    } else {
      out += static_cast<char>(c);
    }
  }
  return out;
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError(kIoError, "io", "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const void* data, size_t n) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError(kIoError, "io", "cannot write " + path);
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

Program load(const std::string& path) {
  if (path.empty()) throw StageError(kUsage, "usage", "--program is required");
  return stage(kAsmError, "asm", [&] { return load_program(path); });
}

void add_run_flags(CLI::App* sub, Config& cfg) {
  sub->add_option("--quantum", cfg.quantum, "Instructions per scheduling quantum")->capture_default_str();
  sub->add_option("--instruction-budget", cfg.instruction_budget, "Executed-instruction limit")
      ->capture_default_str();
}

void add_common_flags(CLI::App* sub, Config& cfg) {
  sub->add_option("--config", "key=value file mirroring these flags (flags win)");
  sub->add_option("--program", cfg.program, "Program (.masm source or container)");
  sub->add_option("--input,--seed", cfg.input, "Seed input file");
  sub->add_option("--output-dir", cfg.output_dir, "Corpus directory");
  sub->add_option("--debug-dir", cfg.debug_dir, "Per-query DIMACS dumps");
  sub->add_option("--jobs", cfg.jobs, "Solver worker threads")->check(CLI::Range(1U, 1024U))->capture_default_str();
  sub->add_option("--solver-timeout", cfg.solver_timeout_ms, "Per-query timeout (ms)")->capture_default_str();
  sub->add_option("--solver-seed", cfg.solver_seed, "Solver decision seed")->capture_default_str();
  sub->add_option("--max-table-size", cfg.max_table_size, "Jump table entry limit")->capture_default_str();
  sub->add_option_function<std::string>(
         "--branch-policy",
         [&cfg](const std::string& v) {
           cfg.branch_policy = v == "random" ? inverter::BranchPolicy::Random : inverter::BranchPolicy::Sequential;
         },
         "Branch order: seq or random")
      ->check(CLI::IsMember({"seq", "random"}));
  sub->add_option("--random-seed", cfg.random_seed, "Seed for --branch-policy random")->capture_default_str();
  sub->add_option("--max-campaign-time", cfg.max_campaign_ms, "Stop starting queries after this many ms (0 = off)");
  sub->add_option("--max-predicate-time", cfg.max_predicate_ms, "Stop building the predicate after this many ms (0 = off)");
  add_run_flags(sub, cfg);
  sub->add_flag("!--no-slicing", cfg.slicing, "Send the whole prefix to the solver");
  sub->add_flag("!--no-skip", cfg.skip, "Execute every instruction symbolically");
  sub->add_flag("!--no-jumptables", cfg.jumptables, "Concretize indirect jumps");
  sub->add_flag("!--no-simplify", cfg.simplify, "Constant folding only");
  sub->add_flag("!--no-context-switch", cfg.context_switch, "One symbolic register file for all threads");
}

// Expands `--config FILE` into `--key value` tokens placed right after the
// subcommand, so that explicit flags later on the command line win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string path;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || args.empty()) return args;
  std::ifstream in(path);
  if (!in) throw StageError(kIoError, "io", "cannot open config " + path);
  std::vector<std::string> injected;
  for (const auto& item : CLI::ConfigINI().from_config(in)) {
    if (item.name.empty() || item.name == "config") continue;
    const std::string key = item.parents.empty() ? item.name : item.fullname();
    if (item.inputs.size() == 1 && (item.inputs[0] == "true" || item.inputs[0] == "false")) {
      injected.push_back("--" + key + "=" + item.inputs[0]);
      continue;
    }
    injected.push_back("--" + key);
    for (const auto& v : item.inputs) injected.push_back(v);
  }
  args.insert(args.begin() + 1, injected.begin(), injected.end());
  return args;
}

std::shared_ptr<spdlog::logger> make_logger() {
  auto log = spdlog::stderr_logger_mt("minidse");
  log->set_pattern("%v");
  const char* env = std::getenv("MINIDSE_DEBUG");
  log->set_level(env && *env && std::string(env) != "0" ? spdlog::level::debug : spdlog::level::warn);
  return log;
}

void log_tables(spdlog::logger& log, const std::vector<symex::JumpTableRecord>& tables) {
  for (const auto& t : tables) {
    log.debug("jumptab site={:#x} access={:#x} {}", t.site, t.access, jumptab::describe(t.table));
  }
}

void finish_campaign(PipelineResult& r, const Config& cfg, spdlog::logger& log, const std::string& dump_predicate) {
  log_tables(log, r.trace.tables);
  if (!dump_predicate.empty()) {
    const std::string smt = symex::predicate_smtlib(r.trace.predicate);
    write_file(dump_predicate, smt.data(), smt.size());
  }
  std::cout << report_table(r);
  std::cout << report_records(r);
  if (!cfg.output_dir.empty()) {
    stage(kIoError, "io", [&] { return inverter::write_corpus(r.report, cfg.output_dir); });
  }
}

int cmd_asm(const std::string& src, const std::string& out) {
  const Program p = stage(kAsmError, "asm", [&] { return assemble_file(src); });
  const auto bytes = serialize_program(p);
  write_file(out, bytes.data(), bytes.size());
  fmt::print("{}: {} instructions, {} data bytes, entry {:#x}\n", out, p.code.size(), p.data.size(), p.entry);
  return kOk;
}

int cmd_run(const Config& cfg, const std::string& dump_events, const std::string& dump_predicate, bool verify,
            spdlog::logger& log) {
  const Program prog = load(cfg.program);
  const auto seed = read_file(cfg.input);
  if (!dump_events.empty()) {
    std::vector<uint8_t> stream;
    stage(kRunError, "run", [&] {
      return run_concrete(prog, seed, cfg.run_config(), [&](Event&& e) { encode_into(e, stream); });
    });
    write_file(dump_events, stream.data(), stream.size());
  }
  PipelineResult r = stage(kSymexError, "symex", [&] { return run_pipeline(prog, seed, cfg, verify); });
  const auto& run = r.trace.run;
  fmt::print("seed run: {} exit={} steps={} branches={} output=\"{}\"\n", to_string(run.status), run.exit_code,
             run.steps, run.trace.size(), escaped(run.output));
  finish_campaign(r, cfg, log, dump_predicate);
  return r.report.failed ? kSolveError : kOk;
}

int cmd_invert(const Config& cfg, const std::string& events_path, const std::string& dump_predicate, bool verify,
               spdlog::logger& log) {
  const Program prog = load(cfg.program);
  const auto seed = read_file(cfg.input);
  const auto stream = read_file(events_path);
  const auto events = stage(kSymexError, "events", [&] { return decode_stream(stream); });
  PipelineResult r;
  r.factory = std::make_unique<ast::ExprFactory>(cfg.simplify_level());
  r.trace = stage(kSymexError, "symex",
                  [&] { return symex::replay_events(prog, seed, events, *r.factory, cfg.symex_config()); });
  if (verify) {
    r.trace.run = stage(kRunError, "run", [&] { return run_concrete(prog, seed, cfg.run_config()); });
  }
  stage(kSolveError, "invert", [&] {
    run_inversion(r, prog, seed, cfg, verify);
    return 0;
  });
  finish_campaign(r, cfg, log, dump_predicate);
  return r.report.failed ? kSolveError : kOk;
}

int cmd_verify(const Config& cfg, const std::string& corpus) {
  const Program prog = load(cfg.program);
  const auto seed = read_file(cfg.input);
  const RunResult seed_run = stage(kRunError, "run", [&] { return run_concrete(prog, seed, cfg.run_config()); });
  const auto entries = stage(kIoError, "io", [&] { return inverter::read_manifest(corpus); });
  size_t correct = 0;
  for (const auto& e : entries) {
    const auto candidate = read_file((fs::path(corpus) / e.name).string());
    verifier::VerifyTarget t;
    t.step = e.step;
    t.kind = e.direction == inverter::Direction::Negate ? BranchKind::Conditional : BranchKind::Indirect;
    t.target = e.target;
    const auto v = verifier::verify(prog, seed_run.trace, candidate, t, cfg.run_config());
    if (v.correct()) ++correct;
    fmt::print("{} {}\n", e.name, verifier::describe(v));
  }
  fmt::print("Correct {} of {}\n", correct, entries.size());
  return kOk;
}

int cmd_bench(const Config& base, const std::string& samples, const std::vector<unsigned>& jobs_list, unsigned reps) {
  std::vector<fs::path> programs;
  for (const auto& e : fs::directory_iterator(samples)) {
    if (e.path().extension() == ".masm") programs.push_back(e.path());
  }
  std::sort(programs.begin(), programs.end());
  std::vector<BenchRow> rows;
  for (const auto& path : programs) {
    fs::path seed_path = path;
    seed_path.replace_extension(".seed");
    if (!fs::exists(seed_path)) continue;
    const Program prog = load(path.string());
    const auto seed = read_file(seed_path.string());
    for (unsigned jobs : jobs_list) {
      Config cfg = base;
      cfg.jobs = jobs;
      rows.push_back(bench_sample(path.stem().string(), prog, seed, cfg, reps));
    }
  }
  std::cout << bench_table(rows);
  for (const auto& r : rows) std::cout << bench_record(r) << "\n";
  return kOk;
}

int cmd_dump_predicate(const Config& cfg, const std::string& out) {
  const Program prog = load(cfg.program);
  const auto seed = read_file(cfg.input);
  ast::ExprFactory f(cfg.simplify_level());
  const auto tr = stage(kSymexError, "symex",
                        [&] { return symex::trace_and_build(prog, seed, f, cfg.run_config(), cfg.symex_config()); });
  const std::string smt = symex::predicate_smtlib(tr.predicate);
  if (out.empty() || out == "-") {
    std::cout << smt;
  } else {
    write_file(out, smt.data(), smt.size());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concolic execution and branch inversion on the mini VM"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  auto log = make_logger();

  std::string asm_src, asm_out = "a.mdsp";
  auto* asm_cmd = app.add_subcommand("asm", "Assemble a .masm file into a program container");
  asm_cmd->add_option("source", asm_src, "Assembly source")->required();
  asm_cmd->add_option("-o,--output", asm_out, "Output container")->capture_default_str();

  Config run_cfg;
  std::string dump_events, dump_predicate;
  bool no_verify = false;
  auto* run_cmd = app.add_subcommand("run", "Trace the seed, build the path predicate and invert every branch");
  add_common_flags(run_cmd, run_cfg);
  run_cmd->add_option("--events-out,--dump-events", dump_events, "Write the framed event stream here");
  run_cmd->add_option("--dump-predicate", dump_predicate, "Write the predicate as SMT-LIB2 here");
  run_cmd->add_flag("--no-verify", no_verify, "Skip replaying generated inputs");

  Config inv_cfg;
  std::string events_path, inv_dump;
  bool inv_no_verify = false;
  auto* inv_cmd = app.add_subcommand("invert", "Invert branches of a predicate built from dumped events");
  add_common_flags(inv_cmd, inv_cfg);
  inv_cmd->add_option("--events", events_path, "Event stream from `run --dump-events`")->required();
  inv_cmd->add_option("--dump-predicate", inv_dump, "Write the predicate as SMT-LIB2 here");
  inv_cmd->add_flag("--no-verify", inv_no_verify, "Skip replaying generated inputs");

  Config ver_cfg;
  std::string corpus;
  auto* ver_cmd = app.add_subcommand("verify", "Replay a corpus and check each input inverts its branch");
  ver_cmd->add_option("--config", "key=value file mirroring these flags (flags win)");
  ver_cmd->add_option("--program", ver_cfg.program, "Program")->required();
  ver_cmd->add_option("--seed,--input", ver_cfg.input, "Seed input")->required();
  ver_cmd->add_option("--corpus", corpus, "Corpus directory with manifest.txt")->required();
  add_run_flags(ver_cmd, ver_cfg);

  Config bench_cfg;
  std::string samples = "samples";
  std::vector<unsigned> jobs_list{1};
  unsigned reps = 3;
  auto* bench_cmd = app.add_subcommand("bench", "Benchmark every sample with a .seed file");
  add_common_flags(bench_cmd, bench_cfg);
  bench_cmd->add_option("--samples", samples, "Directory with .masm programs and .seed inputs")->capture_default_str();
  bench_cmd->add_option("--jobs-list", jobs_list, "Worker counts to sweep")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  bench_cmd->add_option("--reps", reps, "Repetitions (minimum time is reported)")->capture_default_str();

  Config dp_cfg;
  std::string dp_out;
  auto* dp_cmd = app.add_subcommand("dump-predicate", "Print the seed's path predicate as SMT-LIB2");
  add_common_flags(dp_cmd, dp_cfg);
  dp_cmd->add_option("-o,--output", dp_out, "Output file (default stdout)");

  try {
    auto args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const StageError& e) {
    fmt::print(stderr, "error[{}]: {}\n", e.stage, e.what());
    return e.code;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*asm_cmd) return cmd_asm(asm_src, asm_out);
    if (*run_cmd) return cmd_run(run_cfg, dump_events, dump_predicate, !no_verify, *log);
    if (*inv_cmd) return cmd_invert(inv_cfg, events_path, inv_dump, !inv_no_verify, *log);
    if (*ver_cmd) return cmd_verify(ver_cfg, corpus);
    if (*bench_cmd) return cmd_bench(bench_cfg, samples, jobs_list, reps);
    if (*dp_cmd) return cmd_dump_predicate(dp_cfg, dp_out);
  } catch (const StageError& e) {
    fmt::print(stderr, "error[{}]: {}\n", e.stage, e.what());
    return e.code;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kUsage;
  }
  return kUsage;
}
