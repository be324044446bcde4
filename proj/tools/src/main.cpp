#include <iostream>
#include <string>
#include <vector>

#include "popcomp_tools/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return popcomp::tools::run(args, std::cout, std::cerr);
}
