// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "darth/cli.hpp"

int main(int argc, char** argv) { return darth::cli::run(argc, argv, std::cout, std::cerr); }
