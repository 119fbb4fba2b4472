#pragma once

/// Command-line front end: impute, pool, simulate, ppc, validate.

#include <iosfwd>
#include <string>
#include <vector>

namespace mmfc {

/// Exit codes.
constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

/// `args` excludes the program name. Errors go to `err` as one JSON line:
/// {"error":"validation"|"runtime","message":...}.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string version_string();

}  // namespace mmfc
