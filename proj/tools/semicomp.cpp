#include "semicomp/cli.hpp"

int main(int argc, char** argv) {
  return semicomp::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
