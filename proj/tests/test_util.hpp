#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ckt/checkpoint.hpp"
#include "ckt/rng.hpp"

namespace testutil {

// Random checkpoint with a toy-like manifest: one downsampling tensor, a few
// layer groups, one head tensor. Same schema_seed -> same schema.
inline ckt::Checkpoint random_checkpoint(std::uint64_t schema_seed, std::uint64_t value_seed,
                                         ckt::DType dtype = ckt::DType::f64) {
    ckt::Rng schema_rng(ckt::mix_seed(schema_seed, 0xA));
    ckt::Rng value_rng(ckt::mix_seed(value_seed, 0xB));

    const int layers = 1 + static_cast<int>(schema_rng.bounded(3));
    ckt::Checkpoint ckpt;
    auto add = [&](const std::string& name, const std::string& group) {
        const auto rows = 1 + static_cast<std::int64_t>(schema_rng.bounded(6));
        const auto cols = 1 + static_cast<std::int64_t>(schema_rng.bounded(6));
        std::vector<double> values(static_cast<std::size_t>(rows * cols));
        for (double& v : values) v = value_rng.normal();
        ckpt.insert(ckt::Tensor::make(name, dtype, {rows, cols}, std::move(values)));
        ckpt.manifest.groups[group].push_back(name);
    };
    ckpt.manifest.groups["downsampling"] = {};
    ckpt.manifest.groups["head"] = {};
    add("front.weight", "downsampling");
    for (int k = 0; k < layers; ++k)
        add("layer." + std::to_string(k) + ".weight", "layer." + std::to_string(k));
    add("head.weight", "head");
    ckpt.meta["origin"] = "testutil";
    ckpt.validate();
    return ckpt;
}

// Same schema as `like`, fresh values.
inline ckt::Checkpoint reroll_values(const ckt::Checkpoint& like, std::uint64_t value_seed) {
    ckt::Rng rng(ckt::mix_seed(value_seed, 0xC));
    ckt::Checkpoint out;
    out.manifest = like.manifest;
    out.meta = like.meta;
    for (const auto& [name, t] : like.tensors) {
        std::vector<double> values(t.values.size());
        for (double& v : values) v = rng.normal();
        out.insert(ckt::Tensor::make(name, t.dtype, t.shape, std::move(values)));
    }
    return out;
}

inline bool values_close(const ckt::Checkpoint& a, const ckt::Checkpoint& b, double rel_tol) {
    for (const auto& [name, ta] : a.tensors) {
        const ckt::Tensor& tb = b.at(name);
        for (std::size_t i = 0; i < ta.values.size(); ++i) {
            const double x = ta.values[i], y = tb.values[i];
            const double scale = std::max({std::abs(x), std::abs(y), 1.0});
            if (std::abs(x - y) > rel_tol * scale) return false;
        }
    }
    return true;
}

inline bool values_bitwise_equal(const ckt::Checkpoint& a, const ckt::Checkpoint& b) {
    for (const auto& [name, ta] : a.tensors) {
        if (!ta.bitwise_equal(b.at(name))) return false;
    }
    return a.tensors.size() == b.tensors.size();
}

}  // namespace testutil
