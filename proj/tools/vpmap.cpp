// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include "vpmap/cli.hpp"

int main(int argc, char** argv) {
    return vpmap::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
