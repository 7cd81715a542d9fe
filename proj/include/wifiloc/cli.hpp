#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace wifiloc::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,       // bad command line
  kValidation = 3,  // rejected input: config, plan, log, weights
  kRuntime = 4,     // failure while running
};

/// Environment variable naming the directory searched for relative --config
/// paths that do not exist in the working directory.
inline constexpr const char* kConfigDirEnv = "WIFILOC_CONFIG_DIR";

/// Runs one subcommand (args excludes the program name) and returns the exit
/// status. Diagnostics go to err, progress to out.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Default configuration of a subcommand as JSON text.
std::string default_config(const std::string& subcommand);

/// Path of the manifest written next to an output.
std::string manifest_path(const std::string& output);

}  // namespace wifiloc::cli
