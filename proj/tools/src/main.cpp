#include <iostream>

#include "adabatch/cli.hpp"

int main(int argc, char** argv) { return adabatch::run_cli(argc, argv, std::cout, std::cerr); }
