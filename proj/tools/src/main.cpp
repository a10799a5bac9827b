#include <iostream>

#include "lowrank_lab/commands.hpp"

int main(int argc, char** argv) {
  return lowrank::lab::run_cli(argc, argv, std::cout, std::cerr);
}
