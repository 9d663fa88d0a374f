#include "confeval/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return confeval::cli::run(argc, argv, std::cout, std::cerr); }
