#pragma once

#include <iosfwd>

namespace flexgrid::cli {

/// Runs one subcommand. Returns 0 on success, 1 on a domain error
/// (non-convergence, infeasibility, numerical failure) and 2 on a usage or
/// input error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace flexgrid::cli
