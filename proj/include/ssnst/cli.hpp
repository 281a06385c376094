#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace ssnst {

/// Exit codes: 0 success, 1 validation or usage error, 2 numerical failure.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace ssnst
