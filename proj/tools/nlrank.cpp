#include <iostream>

#include "nlrank/cli.hpp"

int main(int argc, char** argv) { return nlrank::run_cli(argc, argv, std::cout, std::cerr); }
