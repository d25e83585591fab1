#pragma once

#include <ostream>
#include <string>

namespace tetradat::tools {

/// Runs a few fast numerical checks and prints one line per check.
bool selftest(const std::string& weights_path, std::ostream& out);

}  // namespace tetradat::tools
