#include <iostream>

#include "tedi/cli.hpp"

int main(int argc, char** argv) {
  return tedi::cli::cli_main(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
