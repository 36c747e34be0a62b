#include "pis/cli.hpp"

int main(int argc, char** argv) { return pis::run_cli(argc, argv); }
