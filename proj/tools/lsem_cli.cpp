#include <string>
#include <vector>

#include "lsem/cli.hpp"

int main(int argc, char** argv) {
  return lsem::cli::dispatch(std::vector<std::string>(argv + 1, argv + argc));
}
