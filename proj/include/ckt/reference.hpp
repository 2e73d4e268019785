#pragma once

#include <vector>

#include "ckt/checkpoint.hpp"
#include "ckt/merge.hpp"

// Serial reference implementations of the merge operators and diagnostics
// reductions. Plain per-scalar loops, no OpenMP, no shared kernel code:
// tests compare the parallel implementations against these, and the bench
// target measures the speedup. ref_ties_merge is the brute-force
// trim/elect/merge oracle and must stay an independent code path.

namespace ckt::ref {

Checkpoint ref_interpolate(const Checkpoint& theta0, const Checkpoint& theta_ft, double alpha);

Checkpoint ref_linear_merge(const Checkpoint& theta0, const std::vector<Checkpoint>& models,
                            double alpha);

Checkpoint ref_ties_merge(const Checkpoint& theta0, const std::vector<Checkpoint>& models,
                          double alpha, double trim_fraction, TrimScope scope = TrimScope::global);

double ref_weight_distortion(const Checkpoint& a, const Checkpoint& b);

}  // namespace ckt::ref
