#include <iostream>

#include "uvtdoa/cli/commands.hpp"

int main(int argc, char** argv)
{
  return uvtdoa::cli::run_cli(argc, argv, std::cout, std::cerr);
}
