#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bdl::testing {

// Central finite differences of a double-precision re-implementation of each
// op, compared with the engine's float backward pass.
inline constexpr double kFdStep = 1e-4;
inline constexpr double kFdRelTol = 1e-4;
inline constexpr double kFdAbsFloor = 1e-6;

struct GradOpResult {
  std::string op;
  std::size_t cases = 0;
  std::size_t failures = 0;
  double worst_excess = 0.0;  // max |a - b| / max(rel * scale, floor)
  std::string first_failure;
};

std::vector<std::string> gradient_ops();
GradOpResult check_op_gradients(const std::string& op, std::size_t cases, std::uint64_t seed);

}  // namespace bdl::testing
