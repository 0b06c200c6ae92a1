#pragma once

#include <iosfwd>

namespace senseflow {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitData = 2,
    kExitNumerical = 3,
};

// Runs one `senseflow` subcommand (loss, refine, metrics, synth, warp,
// costvol). Errors are reported on `err` and mapped to exit codes.
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace senseflow
