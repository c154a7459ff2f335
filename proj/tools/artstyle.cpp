#include <iostream>
#include <string>
#include <vector>

#include "artstyle/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return artstyle::run_command(args, std::cout, std::cerr);
}
