#include <iostream>

#include "cli.h"

int main(int argc, char** argv) {
  return lerg::run_cli(std::vector<std::string>(argv, argv + argc), std::cout,
                       std::cerr);
}
