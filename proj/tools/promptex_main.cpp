#include <iostream>

#include "promptex/cli.hpp"

int main(int argc, char** argv) { return promptex::cli_dispatch(argc, argv, std::cout, std::cerr); }
