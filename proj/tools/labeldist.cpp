#include <iostream>

#include "labeldist/cli.hpp"

int main(int argc, char** argv) {
  return labeldist::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
