#include "recip/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace recip {

GradCheckReport grad_check(const std::function<double(std::span<const double>)>& f,
                           std::span<const double> x,
                           std::span<const double> analytic, double eps,
                           double floor) {
  if (analytic.size() != x.size()) {
    throw std::invalid_argument("grad_check: gradient length differs from input length");
  }
  GradCheckReport report;
  std::vector<double> probe(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = f(probe);
    probe[i] = x[i] - eps;
    const double down = f(probe);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * eps);
    const double rel = std::abs(analytic[i] - numeric) / std::max(std::abs(numeric), floor);
    if (i == 0 || rel > report.max_rel_error) {
      report = {rel, i, analytic[i], numeric};
    }
  }
  return report;
}

}  // namespace recip
