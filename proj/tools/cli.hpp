#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mtpd {

enum ExitCode : int {
    exit_ok = 0,
    exit_other = 1,
    exit_config = 2,
    exit_dependency = 3,
    exit_divergence = 4,
};

/// Entry point of `prune-distill`; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mtpd
