#include "uniqueid/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return uniqueid::cli::main(argc, argv, std::cout, std::cerr);
}
