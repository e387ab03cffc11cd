#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "camloc/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multi-camera robot localization simulator"};
  app.require_subcommand(1);

  std::string scenario, out_dir, stream;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  auto* run = app.add_subcommand("run", "simulate a scenario and evaluate every mode");
  run->add_option("--scenario", scenario, "scenario JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "output directory")->required();
  run->add_option("--seed", seed, "override the scenario seed");
  run->add_option("--override", overrides, "dotted.path=value, repeatable")->take_all();

  auto* gen = app.add_subcommand("gen", "write the bundled scenarios");
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* replay = app.add_subcommand("replay", "evaluate a recorded detection stream");
  replay->add_option("--stream", stream, "detections JSONL")->required()->check(CLI::ExistingFile);
  replay->add_option("--scenario", scenario, "scenario JSON")->required()->check(CLI::ExistingFile);
  replay->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (*run) return camloc::run_command(scenario, out_dir, seed, overrides, std::cerr);
  if (*gen) return camloc::generate_command(out_dir, std::cerr);
  return camloc::replay_command(stream, scenario, out_dir, std::cerr);
}
