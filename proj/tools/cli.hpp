#pragma once

#include <iosfwd>

namespace xrot::cli {

/// Runs the xrot command line. Returns the process exit code: 0 success,
/// 1 user error, 2 internal error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace xrot::cli
