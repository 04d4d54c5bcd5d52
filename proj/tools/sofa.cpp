#include "sofa/cli.hpp"

#include <iostream>

int main(int argc, char ** argv) {
    return sofa::dispatch(argc, argv, std::cout, std::cerr);
}
