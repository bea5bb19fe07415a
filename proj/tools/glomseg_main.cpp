#include <iostream>
#include <string>
#include <vector>

#include "glomseg/experiment.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return glomseg::cli::run(args, std::cout, std::cerr);
}
