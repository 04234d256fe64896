#include <iostream>

#include "gtca/cli.hpp"

int main(int argc, char** argv) { return gtca::run_cli(argc, argv, std::cout, std::cerr); }
