#include "ckt/merge.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "ckt/kernels.hpp"

namespace ckt {

using json = nlohmann::json;

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    std::string s(buf);
    return s;
}

void check_alpha(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw std::runtime_error("alpha out of range: " + fmt_double(alpha) + " (expected [0,1])");
}

void append_provenance(Checkpoint& ckpt, const std::string& entry) {
    auto& p = ckpt.meta["provenance"];
    if (!p.empty()) p += ";";
    p += entry;
}

Checkpoint copy_with_base_metadata(const Checkpoint& base, const Checkpoint& tensor_source) {
    Checkpoint out;
    out.tensors = tensor_source.tensors;
    out.manifest = base.manifest;
    out.meta = base.meta;
    return out;
}

// Per-model keep mask over the flattened task vector, top entries by
// magnitude, index ascending on ties.
std::vector<std::uint8_t> trim_mask(const std::vector<double>& tau, double trim_fraction,
                                    TrimScope scope, const std::vector<std::size_t>& tensor_starts) {
    const std::int64_t n = static_cast<std::int64_t>(tau.size());
    std::vector<std::uint8_t> kept(tau.size(), 0);

    auto select_range = [&](std::size_t lo, std::size_t hi) {
        const std::int64_t len = static_cast<std::int64_t>(hi - lo);
        const std::int64_t m = ties_keep_count(len, trim_fraction);
        if (m <= 0) return;
        if (m >= len) {
            std::fill(kept.begin() + static_cast<std::ptrdiff_t>(lo),
                      kept.begin() + static_cast<std::ptrdiff_t>(hi), std::uint8_t{1});
            return;
        }
        std::vector<std::size_t> idx(static_cast<std::size_t>(len));
        std::iota(idx.begin(), idx.end(), lo);
        auto cmp = [&](std::size_t a, std::size_t b) {
            const double fa = std::abs(tau[a]), fb = std::abs(tau[b]);
            if (fa != fb) return fa > fb;
            return a < b;
        };
        std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m - 1), idx.end(), cmp);
        for (std::int64_t i = 0; i < m; ++i) kept[idx[static_cast<std::size_t>(i)]] = 1;
    };

    if (scope == TrimScope::global) {
        select_range(0, static_cast<std::size_t>(n));
    } else {
        for (std::size_t t = 0; t + 1 < tensor_starts.size(); ++t)
            select_range(tensor_starts[t], tensor_starts[t + 1]);
    }
    return kept;
}

}  // namespace

std::int64_t ties_keep_count(std::int64_t n, double trim_fraction) {
    const std::int64_t m = std::llround(trim_fraction * static_cast<double>(n));
    return std::clamp<std::int64_t>(m, 0, n);
}

MergeMethod merge_method_from_name(const std::string& s) {
    if (s == "interpolate") return MergeMethod::interpolate;
    if (s == "linear") return MergeMethod::linear;
    if (s == "ties") return MergeMethod::ties;
    if (s == "sequential") return MergeMethod::sequential;
    throw std::runtime_error("unknown merge method '" + s + "'");
}

const char* merge_method_name(MergeMethod m) {
    switch (m) {
        case MergeMethod::interpolate: return "interpolate";
        case MergeMethod::linear: return "linear";
        case MergeMethod::ties: return "ties";
        case MergeMethod::sequential: return "sequential";
    }
    return "?";
}

void MergeRecipe::validate() const {
    check_alpha(alpha);
    if (method == MergeMethod::interpolate && inputs.size() != 2)
        throw std::runtime_error("interpolate requires exactly 2 inputs (base, fine-tuned)");
    if (method != MergeMethod::interpolate && inputs.size() < 2)
        throw std::runtime_error(std::string(merge_method_name(method)) +
                                 " requires a base plus at least one fine-tuned model");
    if (method == MergeMethod::ties && !(trim_fraction > 0.0 && trim_fraction <= 1.0))
        throw std::runtime_error("trim_fraction out of range: " + fmt_double(trim_fraction) +
                                 " (expected (0,1])");
}

MergeRecipe MergeRecipe::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open recipe file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const std::exception& e) {
        throw std::runtime_error("recipe '" + path + "': " + e.what());
    }
    MergeRecipe r;
    r.method = merge_method_from_name(j.at("method").get<std::string>());
    r.alpha = j.value("alpha", 0.25);
    r.inputs = j.at("inputs").get<std::vector<std::string>>();
    r.trim_fraction = j.value("trim_fraction", 0.2);
    r.trim_scope = j.value("trim_scope", std::string("global")) == "per_tensor"
                       ? TrimScope::per_tensor
                       : TrimScope::global;
    r.validate();
    return r;
}

std::string MergeRecipe::to_json() const {
    json j = {{"method", merge_method_name(method)},
              {"alpha", alpha},
              {"inputs", inputs}};
    if (method == MergeMethod::ties) {
        j["trim_fraction"] = trim_fraction;
        j["trim_scope"] = trim_scope == TrimScope::per_tensor ? "per_tensor" : "global";
    }
    return j.dump();
}

Checkpoint interpolate(const Checkpoint& theta0, const Checkpoint& theta_ft, double alpha) {
    check_alpha(alpha);
    require_compat(theta0, theta_ft, "interpolate");

    Checkpoint out;
    // Endpoints must reproduce the input tensors bit-exactly.
    if (alpha == 0.0) {
        out = copy_with_base_metadata(theta0, theta0);
    } else if (alpha == 1.0) {
        out = copy_with_base_metadata(theta0, theta_ft);
    } else {
        out.manifest = theta0.manifest;
        out.meta = theta0.meta;
        for (const auto& [name, a] : theta0.tensors) {
            const Tensor& b = theta_ft.at(name);
            std::vector<double> values(a.values.size());
            kernels::axpby(a.values, b.values, alpha, values);
            out.insert(Tensor::make(name, a.dtype, a.shape, std::move(values)));
        }
    }
    append_provenance(out, "interpolate(alpha=" + fmt_double(alpha) + ")");
    return out;
}

Checkpoint linear_merge(const Checkpoint& theta0, const std::vector<Checkpoint>& models,
                        double alpha) {
    check_alpha(alpha);
    if (models.empty()) throw std::runtime_error("linear_merge: empty model list");
    for (const auto& m : models) require_compat(theta0, m, "linear_merge");

    Checkpoint out;
    if (alpha == 0.0) {
        out = copy_with_base_metadata(theta0, theta0);
    } else {
        out.manifest = theta0.manifest;
        out.meta = theta0.meta;
        for (const auto& [name, base] : theta0.tensors) {
            std::vector<std::span<const double>> spans;
            spans.reserve(models.size());
            for (const auto& m : models) spans.emplace_back(m.at(name).values);
            std::vector<double> values(base.values.size());
            kernels::blend_mean(base.values, spans, alpha, values);
            out.insert(Tensor::make(name, base.dtype, base.shape, std::move(values)));
        }
    }
    append_provenance(out, "linear(alpha=" + fmt_double(alpha) +
                               ",k=" + std::to_string(models.size()) + ")");
    return out;
}

Checkpoint ties_merge(const Checkpoint& theta0, const std::vector<Checkpoint>& models, double alpha,
                      double trim_fraction, TrimScope scope) {
    check_alpha(alpha);
    if (models.empty()) throw std::runtime_error("ties_merge: empty model list");
    if (!(trim_fraction > 0.0 && trim_fraction <= 1.0))
        throw std::runtime_error("trim_fraction out of range: " + fmt_double(trim_fraction) +
                                 " (expected (0,1])");
    for (const auto& m : models) require_compat(theta0, m, "ties_merge");

    // Flatten in sorted tensor order.
    std::vector<std::size_t> tensor_starts;
    std::size_t total = 0;
    for (const auto& [name, t] : theta0.tensors) {
        tensor_starts.push_back(total);
        total += t.values.size();
    }
    tensor_starts.push_back(total);

    std::vector<double> base(total);
    {
        std::size_t pos = 0;
        for (const auto& [name, t] : theta0.tensors) {
            std::copy(t.values.begin(), t.values.end(), base.begin() + static_cast<std::ptrdiff_t>(pos));
            pos += t.values.size();
        }
    }

    const std::size_t k = models.size();
    std::vector<std::vector<double>> model_vals(k);
    std::vector<std::vector<double>> tau(k);
    std::vector<std::vector<std::uint8_t>> kept(k);
    for (std::size_t mi = 0; mi < k; ++mi) {
        model_vals[mi].resize(total);
        std::size_t pos = 0;
        for (const auto& [name, t] : theta0.tensors) {
            const auto& mv = models[mi].at(name).values;
            std::copy(mv.begin(), mv.end(), model_vals[mi].begin() + static_cast<std::ptrdiff_t>(pos));
            pos += mv.size();
        }
        auto& tv = tau[mi];
        tv.resize(total);
        const auto& vals = model_vals[mi];
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(total); ++i) {
            const auto idx = static_cast<std::size_t>(i);
            tv[idx] = vals[idx] - base[idx];
        }
        kept[mi] = trim_mask(tv, trim_fraction, scope, tensor_starts);
    }

    // Elect + merge per parameter: consensus sign from the trimmed sum, mean
    // of sign-agreeing models in model-list order.
    std::vector<double> merged(total);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(total); ++i) {
        const auto idx = static_cast<std::size_t>(i);
        double trimmed_sum = 0.0;
        for (std::size_t mi = 0; mi < k; ++mi) {
            if (kept[mi][idx]) trimmed_sum += tau[mi][idx];
        }
        const int sign = trimmed_sum > 0.0 ? 1 : (trimmed_sum < 0.0 ? -1 : 0);
        double model_sum = 0.0;
        int agree = 0;
        if (sign != 0) {
            for (std::size_t mi = 0; mi < k; ++mi) {
                if (!kept[mi][idx]) continue;
                const double tv = tau[mi][idx];
                if ((sign > 0 && tv > 0.0) || (sign < 0 && tv < 0.0)) {
                    model_sum += model_vals[mi][idx];
                    ++agree;
                }
            }
        }
        const double theta_merged = agree > 0 ? model_sum / static_cast<double>(agree) : base[idx];
        if (alpha == 0.0)
            merged[idx] = base[idx];
        else if (alpha == 1.0)
            merged[idx] = theta_merged;
        else
            merged[idx] = (1.0 - alpha) * base[idx] + alpha * theta_merged;
    }

    Checkpoint out;
    out.manifest = theta0.manifest;
    out.meta = theta0.meta;
    {
        std::size_t ti = 0;
        for (const auto& [name, t] : theta0.tensors) {
            const std::size_t lo = tensor_starts[ti], hi = tensor_starts[ti + 1];
            out.insert(Tensor::make(name, t.dtype, t.shape,
                                    std::vector<double>(merged.begin() + static_cast<std::ptrdiff_t>(lo),
                                                        merged.begin() + static_cast<std::ptrdiff_t>(hi))));
            ++ti;
        }
    }
    append_provenance(out, "ties(alpha=" + fmt_double(alpha) + ",trim=" + fmt_double(trim_fraction) +
                               ",scope=" + (scope == TrimScope::per_tensor ? "per_tensor" : "global") +
                               ",k=" + std::to_string(k) + ")");
    return out;
}

Checkpoint sequential_step(const Checkpoint& current, const Checkpoint& fine_tuned, double alpha) {
    Checkpoint out = interpolate(current, fine_tuned, alpha);
    append_provenance(out, "sequential_step(alpha=" + fmt_double(alpha) + ")");
    return out;
}

}  // namespace ckt
