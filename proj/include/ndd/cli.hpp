#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ndd {

// Runs one subcommand. args excludes the program name, so args[0] is the
// subcommand. Returns the process exit code: 0 success, 1 validation
// failure, 2 I/O failure, 64 unknown subcommand / usage. Diagnostics go to
// err as a single "error: <category>: <message>" line.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace ndd
