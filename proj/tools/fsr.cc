#include <iostream>
#include <string>
#include <vector>

#include "fsr/commands.h"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return fsr::run_cli(args, std::cout, std::cerr);
}
