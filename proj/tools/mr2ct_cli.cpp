#include <iostream>
#include <string>
#include <vector>

#include "mr2ct/pipeline.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return mr2ct::run_cli(args, std::cout, std::cerr);
}
