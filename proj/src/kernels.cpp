#include "ckt/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace ckt::kernels {

namespace {
constexpr std::int64_t kBlock = 4096;
}

void axpby(std::span<const double> a, std::span<const double> b, double alpha,
           std::span<double> out) {
    const std::int64_t n = static_cast<std::int64_t>(a.size());
    const double w0 = 1.0 - alpha;
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] =
            w0 * a[static_cast<std::size_t>(i)] + alpha * b[static_cast<std::size_t>(i)];
    }
}

void blend_mean(std::span<const double> base, const std::vector<std::span<const double>>& models,
                double alpha, std::span<double> out) {
    const std::int64_t n = static_cast<std::int64_t>(base.size());
    const double w0 = 1.0 - alpha;
    const double inv_k = 1.0 / static_cast<double>(models.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        const std::size_t idx = static_cast<std::size_t>(i);
        // Neumaier-compensated sum over models
        double sum = 0.0, comp = 0.0;
        for (const auto& m : models) {
            const double v = m[idx];
            const double t = sum + v;
            if (std::abs(sum) >= std::abs(v))
                comp += (sum - t) + v;
            else
                comp += (v - t) + sum;
            sum = t;
        }
        out[idx] = w0 * base[idx] + alpha * ((sum + comp) * inv_k);
    }
}

double det_sum(std::span<const double> x) {
    const std::int64_t n = static_cast<std::int64_t>(x.size());
    const std::int64_t nblocks = (n + kBlock - 1) / kBlock;
    std::vector<double> partial(static_cast<std::size_t>(nblocks), 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t bi = 0; bi < nblocks; ++bi) {
        const std::int64_t lo = bi * kBlock;
        const std::int64_t hi = std::min(n, lo + kBlock);
        double s = 0.0;
        for (std::int64_t i = lo; i < hi; ++i) s += x[static_cast<std::size_t>(i)];
        partial[static_cast<std::size_t>(bi)] = s;
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

double det_sum_squared_diff(std::span<const double> a, std::span<const double> b) {
    const std::int64_t n = static_cast<std::int64_t>(a.size());
    const std::int64_t nblocks = (n + kBlock - 1) / kBlock;
    std::vector<double> partial(static_cast<std::size_t>(nblocks), 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t bi = 0; bi < nblocks; ++bi) {
        const std::int64_t lo = bi * kBlock;
        const std::int64_t hi = std::min(n, lo + kBlock);
        double s = 0.0;
        for (std::int64_t i = lo; i < hi; ++i) {
            const double d = a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)];
            s += d * d;
        }
        partial[static_cast<std::size_t>(bi)] = s;
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

double det_dot(std::span<const double> a, std::span<const double> b) {
    const std::int64_t n = static_cast<std::int64_t>(a.size());
    const std::int64_t nblocks = (n + kBlock - 1) / kBlock;
    std::vector<double> partial(static_cast<std::size_t>(nblocks), 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t bi = 0; bi < nblocks; ++bi) {
        const std::int64_t lo = bi * kBlock;
        const std::int64_t hi = std::min(n, lo + kBlock);
        double s = 0.0;
        for (std::int64_t i = lo; i < hi; ++i)
            s += a[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(i)];
        partial[static_cast<std::size_t>(bi)] = s;
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

}  // namespace ckt::kernels
