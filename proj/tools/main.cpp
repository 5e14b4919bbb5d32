#include "cli.hpp"

int main(int argc, char** argv) {
  return pce::cli::run_cli(std::vector<std::string>(argv, argv + argc));
}
