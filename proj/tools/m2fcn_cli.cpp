#include <iostream>
#include <string>
#include <vector>

#include "m2fcn/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return m2fcn::run_cli(args, std::cout, std::cerr);
}
