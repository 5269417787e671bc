#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace recip {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares `analytic` against central differences (f(x+e) - f(x-e)) / 2e of
/// the scalar function `f` at `x`, coordinate by coordinate. The relative
/// error of one coordinate is |a - n| / max(|n|, floor).
GradCheckReport grad_check(const std::function<double(std::span<const double>)>& f,
                           std::span<const double> x,
                           std::span<const double> analytic, double eps = 1e-4,
                           double floor = 1e-6);

}  // namespace recip
