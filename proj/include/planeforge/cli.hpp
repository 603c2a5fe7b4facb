#pragma once

#include <string>
#include <vector>

namespace pf::cli {

// Exit codes: 0 success, 1 semantic failure (uncertified coloring),
// 2 usage/config, 3 numeric abort, 4 no periodicity found, 5 internal.
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace pf::cli
