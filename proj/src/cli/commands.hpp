#pragma once

// Command-line driver, packaged as a library so the subcommands can also be
// invoked in-process (the acceptance harness does this).
//
// Subcommands: solve, simulate, alm, verify, example.
// Exit codes: 0 success; 1 parse/schema/usage error; 2 validation failure;
// 3 numerical failure; 4 verification mismatch.

#include <string>
#include <vector>

#include "mflq/alm.hpp"

namespace mflq::cli {

int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);  // args without argv[0]

// The bundled three-period allocation example: three risky assets, constant
// risk-free and liability growth, terminal surplus-variance objective
// (q_bar_N = -q_N).  Also reachable as `mflq example`.
AlmProblem example_problem();

}  // namespace mflq::cli
