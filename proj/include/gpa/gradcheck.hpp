#pragma once

#include <cstdint>

#include "gpa/loss.hpp"

namespace gpa {

struct GradCheckSummary {
  int total = 0;
  int passed = 0;
  double worst_rel_error = 0;
  int configs = 0;
};

/// Compares every analytic twist-gradient component and a random sample of
/// per-pixel log-depth gradients against central finite differences (step
/// 1e-5) of the structure-frozen objective, over randomized synthetic window
/// configurations (random textured scenes, perturbed poses and depths).
/// A component passes when |analytic - fd| <= tol * max(|analytic|, |fd|)
/// plus a 1e-7 absolute floor for near-zero components.
GradCheckSummary run_gradient_check(uint64_t seed, int num_configs, double tol,
                                    bool verbose = false);

}  // namespace gpa
