#include <iostream>

#include "wattnet/cli.hpp"

int main(int argc, char** argv) {
  return wattnet::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
