// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "splatloc/cli.hpp"

int main(int argc, char** argv) { return splatloc::run_cli(argc, argv, std::cout, std::cerr); }
