#include <iostream>

#include "cggs/experiment.hpp"

int main(int argc, char** argv)
{
    return cggs::run_cli(argc, argv, std::cout, std::cerr);
}
