#include <iostream>
#include <string>
#include <vector>

#include "rare/cli.hpp"

int main(int argc, char** argv)
{
    std::vector<std::string> args(argv, argv + argc);
    return rare::cli::dispatch(args, std::cout, std::cerr);
}
