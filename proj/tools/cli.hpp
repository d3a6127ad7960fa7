#pragma once

// Command-line front end. Each verb reads one JSON run configuration (plus
// --set overrides), echoes the resolved configuration, and delegates to the
// library.

#include <iosfwd>
#include <string>
#include <vector>

namespace megloc::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kCompatibilityError = 3,
  kNumericError = 4,
};

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// The default configuration document (every accepted key).
std::string default_config_json();

}  // namespace megloc::cli
