#include <iostream>
#include <string>
#include <vector>

#include "ctikit/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return ctikit::cli::run(args, std::cout, std::cerr, std::cin);
}
