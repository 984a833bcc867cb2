#include <iostream>

#include "dialect_lab/cli.h"

int main(int argc, char** argv) {
  return dialect_lab::cli::dispatch(argc, argv, std::cout, std::cerr);
}
