#pragma once

#include <string>
#include <vector>

namespace binkit::cli {

/// Runs one subcommand. `args` excludes the program name. Returns the
/// process exit status: 0 on success, nonzero with a diagnostic on stderr.
int dispatch(const std::vector<std::string>& args);

}  // namespace binkit::cli
