#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lane3d::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitUsage = 64;

/// Runs one subcommand: synth | calibrate | encode | loss | fit | nms | eval | plot.
/// args[0] is the program name. Reports go to `out` as key=value lines.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lane3d::cli
