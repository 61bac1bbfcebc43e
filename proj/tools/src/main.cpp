#include <iostream>

#include "dsparse/cli.hpp"

int main(int argc, char** argv) {
  return dsparse::cli_dispatch(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
