#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace camloc {

/// Exit codes: 0 ok, 1 I/O failure, 2 bad config or input, 3 solver divergence.
int run_command(const std::string& scenario_path, const std::filesystem::path& out_dir,
                std::optional<std::uint64_t> seed, const std::vector<std::string>& overrides,
                std::ostream& err);

int generate_command(const std::filesystem::path& out_dir, std::ostream& err);

int replay_command(const std::string& stream_path, const std::string& scenario_path,
                   const std::filesystem::path& out_dir, std::ostream& err);

}  // namespace camloc
