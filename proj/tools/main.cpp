#include <iostream>

#include "skelnav/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return skelnav::cli::run_cli(args, std::cout, std::cerr);
}
