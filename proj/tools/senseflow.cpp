#include <iostream>

#include "senseflow/cli.hpp"

int main(int argc, char** argv) { return senseflow::cli_dispatch(argc, argv, std::cout, std::cerr); }
