#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace l2copy {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // runtime failure (I/O, numerics)
inline constexpr int kExitUsage = 2;    // bad flags, missing files, invalid configuration

/// Runs one subcommand (label, train, decode, eval, ablate, synth, import,
/// heatmap). args excludes the program name. Diagnostics and the resolved
/// configuration go to err; tables and summaries go to out.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace l2copy
