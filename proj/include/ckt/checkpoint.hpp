#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "ckt/tensor.hpp"

namespace ckt {

// Groups tensors into named parameter groups. `downsampling` and `head` must
// always be present (possibly empty); backbone layers use `layer.<k>` with k
// contiguous from 0. Every tensor belongs to exactly one group.
struct ModelManifest {
    std::map<std::string, std::vector<std::string>> groups;

    static ModelManifest empty();
    // Number of `layer.<k>` groups.
    int layer_count() const;
    std::vector<std::string> group_names() const;
    // Throws if the grouping invariants do not hold for the given tensor set.
    void validate(const std::set<std::string>& tensor_names) const;
};

struct Checkpoint {
    std::map<std::string, Tensor> tensors;  // keyed by tensor name, sorted
    ModelManifest manifest;
    std::map<std::string, std::string> meta;

    void insert(Tensor t);
    const Tensor& at(const std::string& name) const;
    std::int64_t total_params() const;
    void validate() const;
    bool bitwise_equal(const Checkpoint& other) const;
};

struct LoadOptions {
    bool allow_nonfinite = false;
};

Checkpoint load_checkpoint(const std::string& path, const LoadOptions& opts = {});
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

// Schema comparison between two checkpoints. Empty report <=> the pair is
// merge-compatible (identical tensor names, dtypes and shapes).
struct CompatReport {
    std::vector<std::string> missing_in_b;   // present in a, absent in b
    std::vector<std::string> missing_in_a;   // present in b, absent in a
    std::vector<std::string> dtype_mismatches;
    std::vector<std::string> shape_mismatches;

    bool compatible() const;
    std::string to_string() const;
};

CompatReport check_compat(const Checkpoint& a, const Checkpoint& b);

// Throws with the report text when a and b are not merge-compatible.
void require_compat(const Checkpoint& a, const Checkpoint& b, const std::string& context);

}  // namespace ckt
