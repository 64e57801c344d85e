#include <iostream>

#include "lamar/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return lamar::cli::run(args, std::cout, std::cerr);
}
