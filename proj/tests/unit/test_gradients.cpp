#include "doctest.h"
#include "grad_suite.hpp"

using namespace recip::testing;

TEST_CASE("analytic gradients agree with central differences") {
  for (const auto& name : grad_case_names()) {
    for (std::uint64_t seed = 1; seed <= 2; ++seed) {
      const GradCaseResult r = run_grad_case(name, seed);
      INFO(name << " seed " << seed);
      CHECK(r.max_rel_error <= kGradTolerance);
    }
  }
}
