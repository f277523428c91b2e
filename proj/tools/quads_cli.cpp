#include <iostream>

#include "quads/cli.hpp"

int main(int argc, char** argv) { return quads::cli::run(argc, argv, std::cout, std::cerr); }
