// SPDX-License-Identifier: Apache-2.0

#include "phred/commands.hpp"

int main(int argc, char** argv) {
    return phred::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
