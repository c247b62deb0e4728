#pragma once

#include <iosfwd>

namespace uniqueid::cli {

/// Exit codes: 0 ok, 1 domain failure, 2 usage or config error.
enum ExitCode : int { ok = 0, failure = 1, usage = 2 };

/// uniqueid-sim entry point: run, attack, verify, validate. stdout receives
/// one JSON summary object; diagnostics go to err.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace uniqueid::cli
