#include <iostream>
#include <string>
#include <vector>

#include "mte/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mte::cli::run(args, std::cout, std::cerr);
}
