#include <iostream>

#include "stcdit/cli.hpp"

int main(int argc, char** argv) { return stcdit::cli::run(argc, argv, std::cout, std::cerr); }
