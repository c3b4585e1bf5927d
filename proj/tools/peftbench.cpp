// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "peftbench/cli.hpp"

int main(int argc, char** argv) { return peftbench::cli::run(argc, argv, std::cout, std::cerr); }
