#pragma once

#include <iosfwd>

namespace bbq {

// Runs the library's invariant suite (one line per property, PASS or FAIL)
// and returns the number of failures. Backs the `selftest` CLI subcommand.
int run_selftest(std::ostream& out);

}  // namespace bbq
