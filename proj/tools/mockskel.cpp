#include <iostream>

#include "mockskel/cli.hpp"

int main(int argc, char** argv) { return mockskel::cli::run_cli(argc, argv, std::cout, std::cerr); }
