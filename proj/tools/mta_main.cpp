#include <iostream>

#include "mta/commands.hpp"

int main(int argc, char** argv) {
    return mta::cli::run_cli(argc, argv, std::cout, std::cerr);
}
