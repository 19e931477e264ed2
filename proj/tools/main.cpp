// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "snerv/cli.hpp"

int main(int argc, char** argv) { return snerv::run_cli(argc, argv, std::cout, std::cerr); }
