#include "decurtain/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return decurtain::run_cli(argc, argv, std::cout, std::cerr); }
