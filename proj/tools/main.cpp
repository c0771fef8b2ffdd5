// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "app/cli.hpp"

int main(int argc, char** argv) { return irisdeform::app::run_cli(argc, argv, std::cout, std::cerr); }
