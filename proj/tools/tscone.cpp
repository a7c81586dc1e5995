// Command-line front end: run, compare and verify-theory.
//
// Exit codes: 0 success, 1 a run failed or a theory property was violated,
// 2 bad configuration or arguments.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tempscone/config.hpp"
#include "tempscone/experiment.hpp"

namespace ts = tempscone;

namespace {

constexpr int kOk = 0;
constexpr int kRunFailed = 1;
constexpr int kBadConfig = 2;

struct Options {
  std::string config_path;
  std::string out_dir;
  std::string seeds;
  std::string method;
  int jobs = 1;
  std::uint64_t theory_seed = 0;
};

ts::ExperimentSpec load_spec(const Options& opt) {
  ts::ExperimentSpec spec =
      opt.config_path.empty() ? ts::ExperimentSpec{} : ts::parse_config(opt.config_path);
  if (!opt.out_dir.empty()) spec.output_dir = opt.out_dir;
  if (!opt.seeds.empty()) spec.seeds = ts::parse_seed_list(opt.seeds);
  if (!opt.method.empty()) {
    try {
      spec.methods = {ts::parse_method(opt.method)};
    } catch (const std::invalid_argument& e) {
      throw ts::ConfigError(std::string("--method: ") + e.what());
    }
  }
  spec.validate();
  return spec;
}

int execute(const ts::ExperimentSpec& spec, int jobs) {
  const auto cells = ts::run_cells(spec, jobs);
  ts::write_outputs(spec, cells);
  int failed = 0;
  for (const auto& c : cells) {
    if (c.ok) continue;
    ++failed;
    std::cerr << "run failed: method=" << ts::to_string(c.method) << " seed=" << c.seed
              << ": " << c.error << "\n";
  }
  std::cout << (cells.size() - failed) << "/" << cells.size() << " runs completed; outputs in "
            << spec.output_dir << "\n";
  return failed == 0 ? kOk : kRunFailed;
}

int theory(const Options& opt) {
  const std::string dir = opt.out_dir.empty() ? "results" : opt.out_dir;
  std::string table;
  const bool ok = ts::run_theory_sweep(dir, opt.theory_seed, &table);
  std::cout << table;
  return ok ? kOk : kRunFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy-margin OOD training on synthetic drifting streams"};
  app.require_subcommand(0, 1);

  Options opt;
  bool verify_flag = false;
  auto add_common = [&opt](CLI::App* cmd) {
    cmd->add_option("--config", opt.config_path, "INI configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--out", opt.out_dir, "Output directory (overrides the config)");
    cmd->add_option("--seeds", opt.seeds, "Comma-separated seeds (overrides the config)");
    cmd->add_option("--method", opt.method, "scone, temp_scone_atc or temp_scone_ac");
    cmd->add_option("--jobs", opt.jobs, "Worker threads for independent runs")
        ->check(CLI::PositiveNumber);
  };

  add_common(&app);
  app.add_flag("--verify-theory", verify_flag, "Run the divergence property sweep and exit");
  app.add_option("--theory-seed", opt.theory_seed, "Seed of the property sweep");

  auto* run = app.add_subcommand("run", "Run one method over the configured seeds");
  add_common(run);
  auto* compare = app.add_subcommand("compare", "Run every configured method over every seed");
  add_common(compare);
  auto* verify = app.add_subcommand("verify-theory", "Run the divergence property sweep");
  verify->add_option("--out", opt.out_dir, "Output directory");
  verify->add_option("--seed", opt.theory_seed, "Seed of the property sweep");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadConfig;
  }

  if (verify_flag || verify->parsed()) return theory(opt);

  ts::ExperimentSpec spec;
  try {
    spec = load_spec(opt);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kBadConfig;
  }

  try {
    if (compare->parsed()) return execute(spec, opt.jobs);
    // `run` and the bare invocation execute a single method.
    spec.methods.resize(1);
    return execute(spec, opt.jobs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRunFailed;
  }
}
