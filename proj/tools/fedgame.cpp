// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "fedgame/cli.hpp"

int main(int argc, char** argv) { return fedgame::cli::main(argc, argv, std::cout, std::cerr); }
