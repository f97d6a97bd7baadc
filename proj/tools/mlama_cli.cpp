#include <iostream>

#include "mlama/cli.hpp"

int main(int argc, char** argv) { return mlama::cli::main_entry(argc, argv, std::cout, std::cerr); }
