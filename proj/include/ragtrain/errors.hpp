#pragma once

#include <stdexcept>

namespace ragtrain {

struct NonFiniteLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConvergenceFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InfeasibleConfig : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ragtrain
