#include <iostream>

#include "kschem/cli.hpp"

int main(int argc, char** argv) { return kschem::cli_main(argc, argv, std::cout, std::cerr); }
