#pragma once

#include <iosfwd>

namespace debias {

enum ExitCode : int {
    kExitOk = 0,
    kExitOther = 1,
    kExitUsage = 2,
    kExitData = 3,
    kExitTraining = 4,
    kExitInference = 5,
};

// Entry point of the `debias` executable; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace debias
