#include <iostream>

#include "sdcn/cli.hpp"

int main(int argc, char** argv) {
  return sdcn::run_cli(argc, argv, std::cout, std::cerr);
}
