#include "gmoa/cli.hpp"

int main(int argc, char** argv) { return gmoa::cli::run_cli(argc, argv); }
