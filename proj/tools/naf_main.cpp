#include <vector>

#include "naf/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return naf::run_cli(args);
}
