#pragma once

#include <iosfwd>

namespace covit::cli {

// Runs one subcommand. Returns the process exit code: 0 on success, 2 for
// usage errors, 1 for any other failure (with one diagnostic line on `err`).
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace covit::cli
