// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Exit codes: 0 success, 1 runtime failure, 2 usage
// error.

#ifndef PHRED_COMMANDS_HPP
#define PHRED_COMMANDS_HPP

#include <string>
#include <vector>

namespace phred {

inline constexpr const char* kToolVersion = "0.1.0";

// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace phred

#endif  // PHRED_COMMANDS_HPP
