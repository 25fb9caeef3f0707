#include <iostream>

#include "intentr/cli.hpp"

int main(int argc, char** argv) {
  return intentr::cli::run(argc, argv, std::cout, std::cerr);
}
