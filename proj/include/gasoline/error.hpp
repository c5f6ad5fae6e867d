#pragma once

#include <stdexcept>
#include <string>

namespace gasoline {

// Error taxonomy mirrors the CLI exit-code contract:
//   ConfigError -> 2, DataError -> 3, DivergenceError -> 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DivergenceError : std::runtime_error {
  int step;
  DivergenceError(int step_, const std::string& msg)
      : std::runtime_error(msg), step(step_) {}
};

}  // namespace gasoline
