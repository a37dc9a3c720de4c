#include <iostream>

#include "simedu/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return simedu::cli::dispatch(args, std::cout, std::cerr);
}
