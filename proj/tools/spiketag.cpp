#include <iostream>
#include <string>
#include <vector>

#include "spiketag/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return spiketag::run_cli(args, std::cout, std::cerr);
}
