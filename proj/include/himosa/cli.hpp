#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace himosa {

// Single-run command-line orchestrator. `args` excludes the program name.
// Subcommands: train, sr, eval, flops, ablate, check, routes. Normal output
// goes to `out`; failures return nonzero after printing a single
// `error: <cause>` line on `err` (flag misuse gets the parser's usage text
// instead). Exposed as a function so tests can drive it in-process.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace himosa
