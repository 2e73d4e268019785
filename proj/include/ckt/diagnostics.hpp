#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ckt/checkpoint.hpp"

namespace ckt {

// Fixed input set on which per-layer features are extracted. Must be
// identical (same samples, same order) across every checkpoint compared.
struct ProbeSet {
    std::int64_t count = 0;
    int dim = 0;
    std::vector<double> x;  // row-major count x dim

    const double* row(std::int64_t i) const { return x.data() + i * dim; }

    // Accepts {"samples": [[...], ...]} or
    // {"generator": {"input_dim": d, "count": n, "seed": s}}.
    static ProbeSet from_json_file(const std::string& path);
    static ProbeSet gaussian(int dim, std::int64_t count, std::uint64_t seed);
    void save(const std::string& path) const;
};

// Per-layer activations of one checkpoint's model on a probe set.
struct FeatureMatrix {
    int layer = 0;
    std::int64_t rows = 0;
    int cols = 0;
    std::vector<double> data;  // row-major rows x cols

    double* row(std::int64_t i) { return data.data() + i * cols; }
    const double* row(std::int64_t i) const { return data.data() + i * cols; }
};

// One FeatureMatrix per backbone layer (post-activation block outputs).
std::vector<FeatureMatrix> extract_features(const Checkpoint& ckpt, const ProbeSet& probe);

// Mean per-row cosine similarity (zero rows contribute 0 and stay counted)
// and mean per-row euclidean distance.
struct SimilarityResult {
    double cosine = 0.0;
    double l2 = 0.0;
};
SimilarityResult feature_similarity(const FeatureMatrix& a, const FeatureMatrix& b);

// sqrt(sum of squared parameter differences) / parameter count.
double weight_distortion(const Checkpoint& a, const Checkpoint& b);

// Least-squares orthogonal alignment of src onto ref: Q = U V^T from the SVD
// of src^T ref; returns src Q and the Frobenius residual ||src Q - ref||_F.
struct ProcrustesResult {
    FeatureMatrix aligned;
    double residual = 0.0;
};
ProcrustesResult procrustes_align(const FeatureMatrix& src, const FeatureMatrix& ref);

// Ridge regression of f_interp on {f0, f1}, all flattened: solves the 2x2
// normal equations for min ||f_interp - b0 f0 - b1 f1||^2 + lambda (b0^2+b1^2).
// r2 uses the centered total sum of squares.
struct LlfcFit {
    double b0 = 0.0;
    double b1 = 0.0;
    double r2 = 0.0;
};
LlfcFit llfc_regress(const FeatureMatrix& f_interp, const FeatureMatrix& f0,
                     const FeatureMatrix& f1, double ridge_lambda);

struct LlfcRow {
    double alpha = 0.0;
    int layer = 0;
    double b0 = 0.0;
    double b1 = 0.0;
    double r2 = 0.0;
    double align_residual = 0.0;     // interpolated features vs f0 basis
    double align_residual_ft = 0.0;  // fine-tuned features vs f0 basis
};

struct LLFCReport {
    std::vector<LlfcRow> rows;
    double ridge_lambda_rel = 0.0;

    std::string to_json() const;
    std::string to_csv() const;
};

// Full verification: interpolate at each alpha, extract features, align the
// fine-tuned and interpolated features to the base features per layer, then
// regress. ridge_lambda_rel is scaled by the mean squared feature magnitude
// of each layer's design.
LLFCReport llfc_verify(const Checkpoint& theta0, const Checkpoint& theta_ft,
                       const std::vector<double>& alphas, const ProbeSet& probe,
                       double ridge_lambda_rel = 1e-6);

struct DriftLayerRow {
    int layer = 0;
    double cosine = 0.0;
    double l2 = 0.0;
};

struct DriftReport {
    std::vector<DriftLayerRow> layers;
    double weight_distortion = 0.0;

    std::string to_json() const;
    std::string to_csv() const;
};

DriftReport drift_report(const Checkpoint& a, const Checkpoint& b, const ProbeSet& probe);

}  // namespace ckt
