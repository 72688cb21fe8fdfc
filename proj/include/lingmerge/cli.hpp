#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lingmerge::cli {

enum ExitCode : int {
    kOk = 0,
    kValidationFailure = 1,
    kIoFailure = 2,
    kNumericalFailure = 3,
};

// Entry point behind the `lingmerge` binary. args excludes the program name.
// Diagnostics go to `err` as one "error[CODE]: message" line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lingmerge::cli
