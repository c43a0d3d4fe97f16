#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "mfac/commands.hpp"
#include "mfac/config.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Localized mean-field actor-critic: simulate, solve, train and verify"};
  app.set_version_flag("--version", mfac::version_string());
  app.require_subcommand(1, 1);

  std::string config_path;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  std::string out;
  std::string input;
  bool print_config = false;

  const std::pair<const char*, const char*> commands[] = {
      {"simulate", "coupled agent-level and team-level trajectories"},
      {"oracle", "exact tables over every (mu, h) pair"},
      {"train", "localized actor-critic training with logs and checkpoints"},
      {"verify", "run the acceptance checks and write report.json"},
      {"export", "convert a run directory's CSV files to whitespace-separated .dat"},
  };
  for (const auto& [name, description] : commands) {
    CLI::App* sub = app.add_subcommand(name, description);
    sub->add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--out", out, "output directory (default $MFAC_OUTPUT_ROOT/<command>, else runs/<command>)");
    sub->add_option("--set", sets, "dotted.key=value override, repeatable")->take_all();
    sub->add_flag("--print-config", print_config, "print the resolved config and exit");
    if (std::string(name) == "export")
      sub->add_option("input", input, "run directory whose CSV files are converted");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mfac::kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  const CLI::App* sub = app.get_subcommands().front();
  mfac::Overrides overrides;
  overrides.set = sets;
  if (sub->count("--seed")) overrides.seed = seed;
  if (sub->count("--out")) overrides.out = out;
  if (!input.empty()) overrides.set.push_back("export.input=\"" + input + "\"");

  mfac::Json config;
  try {
    config = mfac::load_config(config_path, overrides);
  } catch (...) {
    std::string message;
    const int code = mfac::exit_code_for_current_exception(message);
    std::cerr << message << "\n";
    return code;
  }
  if (print_config) {
    std::cout << config.dump(2) << "\n";
    return 0;
  }
  return mfac::run_command(command, config, std::cout, std::cerr);
}
