// SPDX-License-Identifier: Apache-2.0
#include "mrnode/cli.hpp"

int main(int argc, char** argv) { return mrnode::cli::run(argc, argv); }
