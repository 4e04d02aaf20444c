#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace wiski::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitRuntime = 1,
  kExitUsage = 2,
  kExitMissingFile = 3,
  kExitBadInput = 4,
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses a flat `key = value` file. Blank lines and lines starting with '#' are skipped.
/// Throws MissingFileError if the file cannot be opened and wiski::FormatError on a line
/// without '=' or with an empty key.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

/// Removes `--config FILE` (or `--config=FILE`) from `args` and appends `--key=value` for
/// every config key not already given as a flag, so flags take precedence over the file.
/// Unknown keys surface later as unrecognized flags.
std::vector<std::string> merge_config(const std::vector<std::string>& args);

/// Worker cap from WISKI_THREADS; unset means hardware concurrency. Throws UsageError on
/// a non-positive or non-numeric value.
unsigned worker_threads();

}  // namespace wiski::cli
