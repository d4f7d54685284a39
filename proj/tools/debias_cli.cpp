#include <iostream>

#include "debias/cli.hpp"

int main(int argc, char** argv) {
    return debias::run_cli(argc, argv, std::cout, std::cerr);
}
