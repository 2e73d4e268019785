#include "ckt/reference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ckt::ref {

namespace {

// Flatten checkpoint values in sorted tensor-name order.
std::vector<double> flatten(const Checkpoint& ckpt) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(ckpt.total_params()));
    for (const auto& [name, t] : ckpt.tensors) out.insert(out.end(), t.values.begin(), t.values.end());
    return out;
}

Checkpoint unflatten_like(const Checkpoint& schema, const std::vector<double>& flat) {
    Checkpoint out;
    out.manifest = schema.manifest;
    out.meta = schema.meta;
    std::size_t pos = 0;
    for (const auto& [name, t] : schema.tensors) {
        std::vector<double> vals(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                                 flat.begin() + static_cast<std::ptrdiff_t>(pos + t.values.size()));
        pos += t.values.size();
        out.insert(Tensor::make(name, t.dtype, t.shape, std::move(vals)));
    }
    return out;
}

}  // namespace

Checkpoint ref_interpolate(const Checkpoint& theta0, const Checkpoint& theta_ft, double alpha) {
    require_compat(theta0, theta_ft, "ref_interpolate");
    if (alpha == 0.0) {
        Checkpoint out;
        out.tensors = theta0.tensors;
        out.manifest = theta0.manifest;
        out.meta = theta0.meta;
        return out;
    }
    if (alpha == 1.0) {
        Checkpoint out;
        out.tensors = theta_ft.tensors;
        out.manifest = theta0.manifest;
        out.meta = theta0.meta;
        return out;
    }
    const std::vector<double> a = flatten(theta0);
    const std::vector<double> b = flatten(theta_ft);
    std::vector<double> r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = (1.0 - alpha) * a[i] + alpha * b[i];
    return unflatten_like(theta0, r);
}

Checkpoint ref_linear_merge(const Checkpoint& theta0, const std::vector<Checkpoint>& models,
                            double alpha) {
    if (models.empty()) throw std::runtime_error("ref_linear_merge: empty model list");
    for (const auto& m : models) require_compat(theta0, m, "ref_linear_merge");
    const std::vector<double> base = flatten(theta0);
    std::vector<std::vector<double>> vals;
    vals.reserve(models.size());
    for (const auto& m : models) vals.push_back(flatten(m));

    std::vector<double> r(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        double s = 0.0;
        for (const auto& v : vals) s += v[i];
        const double mean = s / static_cast<double>(vals.size());
        r[i] = alpha == 0.0 ? base[i] : (1.0 - alpha) * base[i] + alpha * mean;
    }
    if (alpha == 0.0) r = base;
    return unflatten_like(theta0, r);
}

Checkpoint ref_ties_merge(const Checkpoint& theta0, const std::vector<Checkpoint>& models,
                          double alpha, double trim_fraction, TrimScope scope) {
    if (models.empty()) throw std::runtime_error("ref_ties_merge: empty model list");
    if (!(trim_fraction > 0.0 && trim_fraction <= 1.0))
        throw std::runtime_error("ref_ties_merge: trim_fraction out of range");
    for (const auto& m : models) require_compat(theta0, m, "ref_ties_merge");

    const std::vector<double> base = flatten(theta0);
    const std::size_t n = base.size();
    const std::size_t k = models.size();

    std::vector<std::size_t> starts;
    {
        std::size_t pos = 0;
        for (const auto& [name, t] : theta0.tensors) {
            starts.push_back(pos);
            pos += t.values.size();
        }
        starts.push_back(pos);
    }

    std::vector<std::vector<double>> theta(k), tau(k);
    std::vector<std::vector<bool>> kept(k, std::vector<bool>(n, false));
    for (std::size_t mi = 0; mi < k; ++mi) {
        theta[mi] = flatten(models[mi]);
        tau[mi].resize(n);
        for (std::size_t i = 0; i < n; ++i) tau[mi][i] = theta[mi][i] - base[i];

        // Trim: full sort by (|tau| descending, index ascending), keep the
        // first round(trim_fraction * range) indices.
        auto keep_range = [&](std::size_t lo, std::size_t hi) {
            const auto len = static_cast<std::int64_t>(hi - lo);
            const std::int64_t m =
                std::clamp<std::int64_t>(std::llround(trim_fraction * static_cast<double>(len)), 0, len);
            std::vector<std::size_t> order(static_cast<std::size_t>(len));
            std::iota(order.begin(), order.end(), lo);
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                const double fa = std::abs(tau[mi][a]), fb = std::abs(tau[mi][b]);
                if (fa != fb) return fa > fb;
                return a < b;
            });
            for (std::int64_t j = 0; j < m; ++j) kept[mi][order[static_cast<std::size_t>(j)]] = true;
        };
        if (scope == TrimScope::global) {
            keep_range(0, n);
        } else {
            for (std::size_t t = 0; t + 1 < starts.size(); ++t) keep_range(starts[t], starts[t + 1]);
        }
    }

    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
        double trimmed_sum = 0.0;
        for (std::size_t mi = 0; mi < k; ++mi)
            if (kept[mi][i]) trimmed_sum += tau[mi][i];
        const int sign = trimmed_sum > 0.0 ? 1 : (trimmed_sum < 0.0 ? -1 : 0);

        double model_sum = 0.0;
        int agree = 0;
        if (sign != 0) {
            for (std::size_t mi = 0; mi < k; ++mi) {
                if (!kept[mi][i]) continue;
                const double tv = tau[mi][i];
                if ((sign > 0 && tv > 0.0) || (sign < 0 && tv < 0.0)) {
                    model_sum += theta[mi][i];
                    ++agree;
                }
            }
        }
        const double merged = agree > 0 ? model_sum / static_cast<double>(agree) : base[i];
        if (alpha == 0.0)
            r[i] = base[i];
        else if (alpha == 1.0)
            r[i] = merged;
        else
            r[i] = (1.0 - alpha) * base[i] + alpha * merged;
    }
    return unflatten_like(theta0, r);
}

double ref_weight_distortion(const Checkpoint& a, const Checkpoint& b) {
    require_compat(a, b, "ref_weight_distortion");
    double ss = 0.0;
    std::int64_t count = 0;
    for (const auto& [name, ta] : a.tensors) {
        const Tensor& tb = b.at(name);
        for (std::size_t i = 0; i < ta.values.size(); ++i) {
            const double d = ta.values[i] - tb.values[i];
            ss += d * d;
        }
        count += ta.numel();
    }
    if (count == 0) return 0.0;
    return std::sqrt(ss) / static_cast<double>(count);
}

}  // namespace ckt::ref
