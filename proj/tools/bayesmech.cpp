#include "bayesmech/cli/config.hpp"
#include "bayesmech/cli/presets.hpp"
#include "bayesmech/cli/runner.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace bayesmech::cli;

std::optional<std::string> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void print_diagnostics(const std::vector<Diagnostic>& diagnostics) {
  for (const auto& d : diagnostics) {
    std::cerr << to_string(d.severity) << ": " << d.path << ": " << d.message << '\n';
  }
}

int cmd_run(const std::string& path, const std::string& output_dir) {
  const auto text = read_file(path);
  if (!text) {
    std::cerr << "error: cannot read " << path << '\n';
    return kExitConfigInvalid;
  }
  const auto outcome = run_config_text(*text, output_dir);
  if (outcome.exit_code != kExitOk) {
    std::cerr << outcome.report.dump(2) << '\n';
    return outcome.exit_code;
  }
  std::cout << outcome.report.dump(2) << '\n';
  std::cout << "artifacts written to " << outcome.output_dir.string() << '\n';
  return kExitOk;
}

int cmd_validate(const std::string& path) {
  const auto text = read_file(path);
  if (!text) {
    std::cerr << "error: cannot read " << path << '\n';
    return kExitConfigInvalid;
  }
  const auto diagnostics = validate_text(*text);
  print_diagnostics(diagnostics);
  if (has_errors(diagnostics)) return kExitConfigInvalid;
  std::cout << "ok\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian Markov blankets, stationary diffusions and free-energy experiments"};
  app.require_subcommand(1);

  std::string run_config;
  std::string output_dir;
  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", run_config, "Config file")->required();
  run->add_option("--output-dir,-o", output_dir, "Override the config's output directory");

  std::string validate_config;
  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("config", validate_config, "Config file")->required();

  auto* presets_cmd = app.add_subcommand("presets", "List or print the shipped configs");
  presets_cmd->require_subcommand(1);
  auto* list = presets_cmd->add_subcommand("list", "List preset names");
  std::string dump_name;
  auto* dump = presets_cmd->add_subcommand("dump", "Print one preset");
  dump->add_option("name", dump_name, "Preset name")->required();

  CLI11_PARSE(app, argc, argv);

  if (*run) return cmd_run(run_config, output_dir);
  if (*validate) return cmd_validate(validate_config);
  if (*list) {
    for (const auto& p : presets()) std::cout << p.name << '\n';
    return kExitOk;
  }
  if (*dump) {
    const auto text = find_preset(dump_name);
    if (!text) {
      std::cerr << "error: no preset named '" << dump_name << "'\n";
      return kExitConfigInvalid;
    }
    std::cout << *text;
    return kExitOk;
  }
  return kExitFailure;
}
