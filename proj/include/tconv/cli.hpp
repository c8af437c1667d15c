#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tconv::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,      // unexpected runtime error
  kUsage = 2,        // unknown flag, bad flag value, invalid configuration
  kMissingFile = 3,  // an input file does not exist or cannot be opened
  kSchema = 4,       // malformed input file or unknown config key
  kDiverged = 5,     // training loss became non-finite
};

/// Runs one subcommand. `args` excludes the program name. Normal output
/// goes to `out`; errors are written to `err` as one JSON object per line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

}  // namespace tconv::cli
