#include <iostream>

#include "chainctl_cli/cli.hpp"

int main(int argc, char** argv) { return chainctl::cli::run(argc, argv, std::cout, std::cerr); }
