#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hmt::cli {

// Runs the `hmt` command line. `args` excludes the program name.
// Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hmt::cli
