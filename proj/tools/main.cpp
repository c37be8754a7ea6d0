#include <iostream>
#include <string>
#include <vector>

#include "l2copy/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return l2copy::run_cli(args, std::cout, std::cerr);
}
