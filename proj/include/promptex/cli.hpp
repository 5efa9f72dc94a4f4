#pragma once

#include <iosfwd>

namespace promptex {

// Entry point of the promptex command line tool. Returns the process exit
// status: 0 on success, 1 for a failed command, 2 for a usage error.
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace promptex
