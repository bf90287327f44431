#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace webforge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitValidation = 2;

struct Env {
  std::ostream& out;
  std::ostream& err;
  /// Called by serve and study-serve once listening; returns when the server
  /// should shut down. Unset: block until SIGINT or SIGTERM.
  std::function<void()> wait_for_shutdown;
};

/// Entry point of the `webforge` tool. args excludes the program name.
int run(const std::vector<std::string>& args, Env& env);

}  // namespace webforge::cli
