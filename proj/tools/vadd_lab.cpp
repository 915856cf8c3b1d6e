#include <string>
#include <vector>

#include "vadd/cli/app.hpp"

int main(int argc, char** argv) {
  return vadd::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
