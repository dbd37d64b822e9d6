#include <iostream>

#include "keylock/cli.hpp"

int main(int argc, char** argv) {
  return keylock::run_cli(argc, argv, std::cout, std::cerr);
}
