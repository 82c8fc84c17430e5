#include <iostream>
#include <string>
#include <vector>

#include "nclasso_tools/cli.hpp"

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv, argv + argc);
    return nclasso::cli::run(args, std::cout, std::cerr);
}
