#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "thinfilm/acceptance.hpp"
#include "thinfilm/app.hpp"

namespace app = thinfilm::app;
namespace acc = thinfilm::acceptance;

int main(int argc, char** argv) {
  CLI::App cli{"Implicit Euler and slope-equation solvers for the periodic thin-film flow"};
  cli.require_subcommand(1);

  std::string config;
  // one per subcommand: default_val writes through immediately
  std::string out, check_out, sweep_out;
  int jobs = 1;
  bool quiet = false;

  auto* run = cli.add_subcommand("run", "Run one configuration");
  run->add_option("--config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Output directory (overrides output.dir)");
  run->add_flag("--quiet", quiet, "Suppress per-check output");

  auto* cmp = cli.add_subcommand("compare", "Run a compare-mode configuration");
  cmp->add_option("--config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  cmp->add_option("--out", out, "Output directory (overrides output.dir)");
  cmp->add_flag("--quiet", quiet, "Suppress per-check output");

  auto* check = cli.add_subcommand("check", "Run the acceptance suite");
  check->add_option("--out", check_out, "Output directory")->default_val("check_out");
  check->add_flag("--quiet", quiet, "Only print the summary line");

  auto* sweep = cli.add_subcommand("sweep", "Run a template over a parameter grid");
  sweep->add_option("--config", config, "JSON sweep specification")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", sweep_out, "Output directory")->default_val("sweep_out");
  sweep->add_option("--jobs", jobs, "Concurrent entries")->default_val(1)->check(CLI::PositiveNumber);
  sweep->add_flag("--quiet", quiet, "Suppress per-entry output");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : app::kExitConfigError;
  }

  const app::RunOptions opt{quiet};
  const std::optional<std::filesystem::path> out_path =
      out.empty() ? std::nullopt : std::optional<std::filesystem::path>(out);

  if (*run) return app::run_file(config, out_path, opt);
  if (*cmp) return app::run_file(config, out_path, opt, app::Mode::compare);
  if (*sweep) return app::run_sweep(config, sweep_out, jobs, opt);

  acc::Options ao;
  ao.out_dir = check_out;
  ao.quiet = quiet;
  ao.on_result = [&](const acc::CriterionResult& r) {
    std::cout << acc::format_line(r) << '\n';
    if (!quiet)
      for (const auto& note : r.notes) std::cout << "    " << note << '\n';
    std::cout.flush();
  };
  const auto results = acc::run_all(ao);
  int failed = 0;
  for (const auto& r : results) failed += r.pass() ? 0 : 1;
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed")
            << '\n';
  return failed == 0 ? app::kExitOk : app::kExitCheckFailed;
}
