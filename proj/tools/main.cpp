#include <iostream>
#include <string>
#include <vector>

#include "wifiloc/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return wifiloc::cli::dispatch(args, std::cout, std::cerr);
}
