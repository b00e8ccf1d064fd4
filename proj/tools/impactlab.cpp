#include <iostream>

#include "impactlab/cli.hpp"

int main(int argc, char** argv) {
  return impactlab::app::run_cli(argc, argv, std::cout, std::cerr);
}
