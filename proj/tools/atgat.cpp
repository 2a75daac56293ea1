// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "atgat/cli.hpp"

int main(int argc, char** argv) { return atgat::cli::run(argc, argv, std::cout, std::cerr); }
