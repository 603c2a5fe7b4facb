#include "planeforge/cli.hpp"

int main(int argc, char** argv) { return pf::cli::run_cli(argc, argv); }
