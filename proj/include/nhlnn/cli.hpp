#pragma once

// Command-line driver: gen, train, eval and simulate subcommands.

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "nhlnn/systems.hpp"

namespace nhlnn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Environment variable naming the directory that default output paths live in.
inline constexpr const char* kOutputRootVariable = "NHLNN_OUTPUT_ROOT";

/// args excludes the program name. Messages go to out (results, logs) and err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "q0,q1,...;qd0,qd1,..." with exactly dof entries on each side.
State parse_state(std::string_view text, std::size_t dof);

/// "k=v" pairs applied over the defaults.
SystemParams parse_params(const std::vector<std::string>& pairs);

/// key=value lines; blank lines and lines starting with '#' are skipped.
std::vector<std::pair<std::string, std::string>> read_config(const std::filesystem::path& path);

}  // namespace nhlnn::cli
