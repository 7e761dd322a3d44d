// dpsi: simulate, generate synthetic data, identify parameters, sweep loss
// landscapes and plan shaping actions.

#include "dpsi/app.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

int main(int argc, char** argv) {
  CLI::App cli{"Differentiable elastoplastic simulation and physical parameter identification"};
  cli.require_subcommand(1);
  cli.set_version_flag("--version", dpsi::app::kVersion);

  struct Args {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    bool deterministic = true;
  };
  Args args;
  const std::map<std::string, std::string> help{
      {"simulate", "Roll out one motion on one body and write the particles and heightmaps"},
      {"make-synthetic", "Generate a synthetic dataset from known parameters"},
      {"identify", "Identify the six parameters on a dataset with Adam"},
      {"landscape", "Sweep the loss over pairs of parameters"},
      {"plan", "Greedy shaping plan towards a target heightmap"}};
  for (const std::string& name : dpsi::app::command_names()) {
    CLI::App* sub = cli.add_subcommand(name, help.at(name));
    sub->add_option("--config", args.config, "YAML run configuration (defaults when omitted)")->check(CLI::ExistingFile);
    sub->add_option("--out", args.out, "Output directory; must be absent or empty")->required();
    sub->add_option("--seed", args.seed, "Seed for all randomness; overrides run.seed");
    sub->add_option("--deterministic", args.deterministic, "Bit-reproducible accumulation order")
        ->default_val(true);
  }
  CLI11_PARSE(cli, argc, argv);

  const std::string command = cli.get_subcommands().front()->get_name();
  try {
    const std::string text = args.config.empty() ? std::string() : dpsi::io::read_text(args.config);
    const dpsi::app::Run run = dpsi::app::make_run(command, text, args.out, args.seed, args.deterministic);
    dpsi::app::execute(run);
  } catch (const dpsi::ConfigError& e) {
    std::cerr << "dpsi " << command << ": config error: " << e.what() << "\n";
    return 2;
  } catch (const dpsi::IoError& e) {
    std::cerr << "dpsi " << command << ": I/O error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "dpsi " << command << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
