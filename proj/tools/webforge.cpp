#include <iostream>
#include <string>
#include <vector>

#include "webforge/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  webforge::cli::Env env{std::cout, std::cerr, {}};
  return webforge::cli::run(args, env);
}
