#pragma once

#include <string>
#include <vector>

#include "ckt/checkpoint.hpp"

namespace ckt {

enum class MergeMethod { interpolate, linear, ties, sequential };
enum class TrimScope { global, per_tensor };

MergeMethod merge_method_from_name(const std::string& s);
const char* merge_method_name(MergeMethod m);

// Declarative description of one merge. `inputs` holds checkpoint paths:
// first the base model, then the fine-tuned model(s).
struct MergeRecipe {
    MergeMethod method = MergeMethod::interpolate;
    double alpha = 0.25;
    std::vector<std::string> inputs;
    double trim_fraction = 0.2;          // ties only: fraction of entries kept
    TrimScope trim_scope = TrimScope::global;

    void validate() const;
    static MergeRecipe from_json_file(const std::string& path);
    std::string to_json() const;
};

// out = (1-alpha)*theta0 + alpha*theta_ft. Endpoints alpha==0 / alpha==1
// must return the respective input tensors bit-exactly.
Checkpoint interpolate(const Checkpoint& theta0, const Checkpoint& theta_ft, double alpha);

// out = (1-alpha)*theta0 + alpha*mean(models)
Checkpoint linear_merge(const Checkpoint& theta0, const std::vector<Checkpoint>& models,
                        double alpha);

// TIES: per model, keep the top trim_fraction of task-vector entries by
// magnitude and zero the rest; elect a per-parameter consensus sign from the
// sum of trimmed task vectors; average the sign-agreeing models; blend the
// result with theta0. A parameter with no agreeing entries stays at theta0.
Checkpoint ties_merge(const Checkpoint& theta0, const std::vector<Checkpoint>& models, double alpha,
                      double trim_fraction, TrimScope scope = TrimScope::global);

// One stage of a sequential fine-tuning chain; identical to interpolate but
// records the chain stage in the output provenance.
Checkpoint sequential_step(const Checkpoint& current, const Checkpoint& fine_tuned, double alpha);

// Number of entries kept when trimming n values at the given fraction.
std::int64_t ties_keep_count(std::int64_t n, double trim_fraction);

}  // namespace ckt
