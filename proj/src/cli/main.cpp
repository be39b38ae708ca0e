#include "src/cli/commands.hpp"

int main(int argc, char** argv) { return mflq::cli::run_cli(argc, argv); }
