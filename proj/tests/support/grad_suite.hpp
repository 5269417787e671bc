#pragma once
// Finite-difference checks of every differentiable operation, in double.

#include <cstdint>
#include <string>
#include <vector>

namespace recip::testing {

inline constexpr double kGradEps = 1e-5;
inline constexpr double kGradFloor = 1e-5;  // denominator floor of the relative error
inline constexpr double kGradTolerance = 1e-4;

struct GradCaseResult {
  std::string name;
  std::uint64_t seed = 0;
  double max_rel_error = 0.0;
};

std::vector<std::string> grad_case_names();

/// Runs one named case with one seed.
GradCaseResult run_grad_case(const std::string& name, std::uint64_t seed);

}  // namespace recip::testing
