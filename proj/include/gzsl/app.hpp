#pragma once

// Command-line front end. Lives in the library so tests can drive it.

#include <iosfwd>
#include <string>
#include <vector>

namespace gzsl::app {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode { kOk = 0, kUsage = 1, kValidation = 2, kNumerical = 3 };

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Runs the self-checks (gradients, special functions, small Monte-Carlo loss
// checks), printing one line per check. True when all pass.
bool selfcheck(std::ostream& out);

}  // namespace gzsl::app
