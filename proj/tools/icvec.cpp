// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#include "icvec/cli.hpp"

int main(int argc, char** argv) { return icvec::run_cli(argc, argv); }
