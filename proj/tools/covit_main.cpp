#include "covit/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return covit::cli::dispatch(argc, argv, std::cout, std::cerr); }
