#pragma once

#include <cstddef>
#include <span>
#include <vector>

// OpenMP-parallel inner loops shared by the merge operators and diagnostics.
// Elementwise kernels are bit-deterministic under any thread count; reductions
// use fixed-size blocks combined in block order, so their results are
// independent of scheduling as well.

namespace ckt::kernels {

// out[i] = (1-alpha)*a[i] + alpha*b[i]
void axpby(std::span<const double> a, std::span<const double> b, double alpha,
           std::span<double> out);

// out[i] = (1-alpha)*base[i] + alpha*mean_m(models[m][i]), compensated
// (Neumaier) summation over models so the result is permutation-stable.
void blend_mean(std::span<const double> base, const std::vector<std::span<const double>>& models,
                double alpha, std::span<double> out);

// Deterministic blocked sum: per-block serial partial sums (parallel over
// blocks), combined serially in block order.
double det_sum(std::span<const double> x);

// Deterministic sum of f(i) for i in [0, n).
double det_sum_squared_diff(std::span<const double> a, std::span<const double> b);
double det_dot(std::span<const double> a, std::span<const double> b);

}  // namespace ckt::kernels
