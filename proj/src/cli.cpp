#include "camloc/cli.hpp"

#include <fstream>
#include <ostream>

#include "camloc/error.hpp"
#include "camloc/pipeline.hpp"
#include "camloc/scenario.hpp"
#include "camloc/sync.hpp"

namespace camloc {

namespace {

int run_pipeline(const ScenarioConfig& config, const MotionData& motion,
                 const std::vector<DetectionMessage>& messages, const std::filesystem::path& out_dir,
                 std::ostream& err) {
  RunResult result;
  try {
    result = execute(config, motion, messages);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::SolverDiverged ? 3 : 2;
  }
  try {
    write_outputs(out_dir, config, result);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  if (result.counters.empty_stream != 0) err << "warning: empty detection stream\n";
  return 0;
}

}  // namespace

int run_command(const std::string& scenario_path, const std::filesystem::path& out_dir,
                std::optional<std::uint64_t> seed, const std::vector<std::string>& overrides,
                std::ostream& err) {
  ScenarioConfig config;
  try {
    config = load_scenario(scenario_path, overrides, seed);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  const MotionData motion = simulate_motion(config);
  const std::vector<DetectionMessage> messages = simulate_detections(config, motion.truth);
  try {
    std::filesystem::create_directories(out_dir);
    std::ofstream out(out_dir / "detections.jsonl", std::ios::binary);
    write_jsonl(out, messages);
    if (!out) throw std::runtime_error("cannot write detections.jsonl");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return run_pipeline(config, motion, messages, out_dir, err);
}

int generate_command(const std::filesystem::path& out_dir, std::ostream& err) {
  try {
    std::filesystem::create_directories(out_dir);
    for (const auto& name : bundled_scenario_names()) {
      std::ofstream out(out_dir / (name + ".json"), std::ios::binary);
      out << scenario_to_json(bundled_scenario(name)).dump(2) << '\n';
      if (!out) throw std::runtime_error("cannot write " + name + ".json");
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int replay_command(const std::string& stream_path, const std::string& scenario_path,
                   const std::filesystem::path& out_dir, std::ostream& err) {
  ScenarioConfig config;
  try {
    config = load_scenario(scenario_path);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  std::ifstream in(stream_path, std::ios::binary);
  if (!in) {
    err << "error: cannot open stream '" << stream_path << "'\n";
    return 1;
  }
  std::vector<DetectionMessage> messages;
  try {
    messages = read_jsonl(in);
  } catch (const Error& e) {
    err << "error: " << stream_path << ": " << e.what() << '\n';
    return 2;
  }
  return run_pipeline(config, simulate_motion(config), messages, out_dir, err);
}

}  // namespace camloc
