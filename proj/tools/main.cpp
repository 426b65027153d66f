#include <iostream>
#include <string>
#include <vector>

#include "buildherd/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return buildherd::run_cli(args, std::cout, std::cerr);
}
