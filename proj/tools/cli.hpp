#pragma once

// The `autogen` command line: subcommands for each pipeline stage, an INI
// config file with flag overrides, and one run directory per invocation.

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace autogen::cli {

/// Root for run directories: $AUTOGEN_RUNS_ROOT, else "runs".
std::filesystem::path default_runs_root();

/// Parses and executes one invocation. Returns the process exit status:
/// 0 on success, 2 for usage or config errors, 3 data, 4 divergence,
/// 5 validation, 1 anything else.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace autogen::cli
