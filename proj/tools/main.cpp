#include <iostream>

#include "riskcast/cli.hpp"

int main(int argc, char** argv) { return riskcast::run_cli(argc, argv, std::cout, std::cerr); }
