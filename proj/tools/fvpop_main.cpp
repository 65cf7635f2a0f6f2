#include "fvpop/cli.hpp"

int main(int argc, char** argv) { return fvpop::run_cli(argc, argv); }
