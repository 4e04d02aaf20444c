#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wiski::cli {

/// Parses `args` (without the program name), runs the subcommand and returns its exit code.
/// Diagnostics go to `err`; results go to the --out file or `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wiski::cli
