#include <iostream>

#include "vclanc/cli.hpp"

int main(int argc, char** argv) { return vclanc::cli::run(argc, argv, std::cout, std::cerr); }
