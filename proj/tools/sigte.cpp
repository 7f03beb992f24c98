#include <iostream>

#include "sigte/cli.hpp"

int main(int argc, char** argv) { return sigte::run_cli(argc, argv, std::cout, std::cerr); }
