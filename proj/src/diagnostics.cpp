#include "ckt/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>
#include <json.hpp>

#include "ckt/kernels.hpp"
#include "ckt/merge.hpp"
#include "ckt/rng.hpp"
#include "ckt/toy.hpp"

namespace ckt {

using json = nlohmann::json;

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

void require_same_shape(const FeatureMatrix& a, const FeatureMatrix& b, const char* what) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw std::runtime_error(std::string(what) + ": feature shape mismatch (" +
                                 std::to_string(a.rows) + "x" + std::to_string(a.cols) + " vs " +
                                 std::to_string(b.rows) + "x" + std::to_string(b.cols) + ")");
}

}  // namespace

ProbeSet ProbeSet::gaussian(int dim, std::int64_t count, std::uint64_t seed) {
    if (dim < 1 || count < 1) throw std::runtime_error("probe: dim and count must be >= 1");
    ProbeSet probe;
    probe.dim = dim;
    probe.count = count;
    probe.x.resize(static_cast<std::size_t>(count) * dim);
    Rng rng(mix_seed(seed, 0x9B));
    for (double& v : probe.x) v = rng.normal();
    return probe;
}

ProbeSet ProbeSet::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open probe file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const std::exception& e) {
        throw std::runtime_error("probe '" + path + "': " + e.what());
    }
    if (j.contains("samples")) {
        const auto& samples = j.at("samples");
        if (samples.empty()) throw std::runtime_error("probe '" + path + "': no samples");
        ProbeSet probe;
        probe.count = static_cast<std::int64_t>(samples.size());
        probe.dim = static_cast<int>(samples.front().size());
        probe.x.reserve(static_cast<std::size_t>(probe.count) * probe.dim);
        for (const auto& row : samples) {
            if (static_cast<int>(row.size()) != probe.dim)
                throw std::runtime_error("probe '" + path + "': ragged sample rows");
            for (const auto& v : row) probe.x.push_back(v.get<double>());
        }
        return probe;
    }
    if (j.contains("generator")) {
        const auto& g = j.at("generator");
        return gaussian(g.at("input_dim").get<int>(), g.at("count").get<std::int64_t>(),
                        g.at("seed").get<std::uint64_t>());
    }
    throw std::runtime_error("probe '" + path + "': expected 'samples' or 'generator'");
}

void ProbeSet::save(const std::string& path) const {
    json samples = json::array();
    for (std::int64_t i = 0; i < count; ++i) {
        json r = json::array();
        for (int k = 0; k < dim; ++k) r.push_back(row(i)[k]);
        samples.push_back(std::move(r));
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << json{{"samples", samples}}.dump() << "\n";
}

std::vector<FeatureMatrix> extract_features(const Checkpoint& ckpt, const ProbeSet& probe) {
    const ToyModel model = ToyModel::from_checkpoint(ckpt);
    if (model.input_dim != probe.dim)
        throw std::runtime_error("extract_features: probe dim " + std::to_string(probe.dim) +
                                 " does not match model input dim " +
                                 std::to_string(model.input_dim));

    std::vector<FeatureMatrix> features(static_cast<std::size_t>(model.layers));
    for (int layer = 0; layer < model.layers; ++layer) {
        features[static_cast<std::size_t>(layer)].layer = layer;
        features[static_cast<std::size_t>(layer)].rows = probe.count;
        features[static_cast<std::size_t>(layer)].cols = model.hidden_dim;
        features[static_cast<std::size_t>(layer)].data.resize(
            static_cast<std::size_t>(probe.count) * model.hidden_dim);
    }

#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < probe.count; ++i) {
        std::vector<double> front_out, hidden, logits;
        model.forward(probe.row(i), front_out, hidden, logits);
        for (int layer = 0; layer < model.layers; ++layer) {
            const double* src = hidden.data() + static_cast<std::size_t>(layer) * model.hidden_dim;
            std::copy(src, src + model.hidden_dim, features[static_cast<std::size_t>(layer)].row(i));
        }
    }
    return features;
}

SimilarityResult feature_similarity(const FeatureMatrix& a, const FeatureMatrix& b) {
    require_same_shape(a, b, "feature_similarity");
    std::vector<double> cosines(static_cast<std::size_t>(a.rows));
    std::vector<double> dists(static_cast<std::size_t>(a.rows));
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < a.rows; ++i) {
        const double* ra = a.row(i);
        const double* rb = b.row(i);
        double dot = 0.0, na = 0.0, nb = 0.0, d2 = 0.0;
        for (int k = 0; k < a.cols; ++k) {
            dot += ra[k] * rb[k];
            na += ra[k] * ra[k];
            nb += rb[k] * rb[k];
            const double d = ra[k] - rb[k];
            d2 += d * d;
        }
        cosines[static_cast<std::size_t>(i)] =
            (na > 0.0 && nb > 0.0) ? dot / (std::sqrt(na) * std::sqrt(nb)) : 0.0;
        dists[static_cast<std::size_t>(i)] = std::sqrt(d2);
    }
    SimilarityResult out;
    out.cosine = kernels::det_sum(cosines) / static_cast<double>(a.rows);
    out.l2 = kernels::det_sum(dists) / static_cast<double>(a.rows);
    return out;
}

double weight_distortion(const Checkpoint& a, const Checkpoint& b) {
    require_compat(a, b, "weight_distortion");
    double ss = 0.0;
    std::int64_t count = 0;
    for (const auto& [name, ta] : a.tensors) {
        const Tensor& tb = b.at(name);
        ss += kernels::det_sum_squared_diff(ta.values, tb.values);
        count += ta.numel();
    }
    if (count == 0) return 0.0;
    return std::sqrt(ss) / static_cast<double>(count);
}

ProcrustesResult procrustes_align(const FeatureMatrix& src, const FeatureMatrix& ref) {
    require_same_shape(src, ref, "procrustes_align");
    if (src.cols < 1) throw std::runtime_error("procrustes_align: empty feature dimension");
    for (double v : src.data)
        if (!std::isfinite(v)) throw std::runtime_error("procrustes_align: non-finite input (SVD would fail)");
    for (double v : ref.data)
        if (!std::isfinite(v)) throw std::runtime_error("procrustes_align: non-finite input (SVD would fail)");

    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMajor> S(src.data.data(), src.rows, src.cols);
    Eigen::Map<const RowMajor> R(ref.data.data(), ref.rows, ref.cols);

    const Eigen::MatrixXd M = S.transpose() * R;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::MatrixXd Q = svd.matrixU() * svd.matrixV().transpose();

    ProcrustesResult result;
    result.aligned.layer = src.layer;
    result.aligned.rows = src.rows;
    result.aligned.cols = src.cols;
    result.aligned.data.resize(src.data.size());
    Eigen::Map<RowMajor> A(result.aligned.data.data(), src.rows, src.cols);
    A = S * Q;
    result.residual = (A - R).norm();
    return result;
}

LlfcFit llfc_regress(const FeatureMatrix& f_interp, const FeatureMatrix& f0,
                     const FeatureMatrix& f1, double ridge_lambda) {
    require_same_shape(f_interp, f0, "llfc_regress");
    require_same_shape(f_interp, f1, "llfc_regress");
    if (ridge_lambda < 0.0) throw std::runtime_error("llfc_regress: ridge_lambda must be >= 0");

    const std::span<const double> y(f_interp.data);
    const std::span<const double> x0(f0.data);
    const std::span<const double> x1(f1.data);

    const double g00 = kernels::det_dot(x0, x0);
    const double g11 = kernels::det_dot(x1, x1);
    const double g01 = kernels::det_dot(x0, x1);
    const double r0 = kernels::det_dot(x0, y);
    const double r1 = kernels::det_dot(x1, y);

    const double a00 = g00 + ridge_lambda, a11 = g11 + ridge_lambda;
    const double det = a00 * a11 - g01 * g01;
    if (ridge_lambda == 0.0 && !(std::abs(det) > 1e-12 * std::max(g00 * g11, 1e-300)))
        throw std::runtime_error("llfc_regress: singular system (f0 and f1 collinear; use ridge_lambda > 0)");

    LlfcFit fit;
    fit.b0 = (a11 * r0 - g01 * r1) / det;
    fit.b1 = (a00 * r1 - g01 * r0) / det;

    const std::size_t n = y.size();
    std::vector<double> resid(n);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
        const auto k = static_cast<std::size_t>(i);
        resid[k] = y[k] - fit.b0 * x0[k] - fit.b1 * x1[k];
    }
    const double rss = kernels::det_dot(resid, resid);
    const double mean = kernels::det_sum(y) / static_cast<double>(n);
    std::vector<double> centered(n);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
        const auto k = static_cast<std::size_t>(i);
        centered[k] = y[k] - mean;
    }
    const double tss = kernels::det_dot(centered, centered);
    if (tss == 0.0) {
        fit.r2 = rss == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
    } else {
        fit.r2 = 1.0 - rss / tss;
    }
    return fit;
}

LLFCReport llfc_verify(const Checkpoint& theta0, const Checkpoint& theta_ft,
                       const std::vector<double>& alphas, const ProbeSet& probe,
                       double ridge_lambda_rel) {
    require_compat(theta0, theta_ft, "llfc_verify");
    for (double a : alphas) {
        if (!(a > 0.0 && a < 1.0))
            throw std::runtime_error("llfc_verify: alphas must lie strictly inside (0,1), got " +
                                     fmt_double(a));
    }

    const auto f0 = extract_features(theta0, probe);
    const auto f1 = extract_features(theta_ft, probe);
    if (f0.size() != f1.size()) throw std::runtime_error("llfc_verify: layer count mismatch");

    // Align the fine-tuned endpoint once per layer; interpolated features are
    // aligned per alpha.
    std::vector<FeatureMatrix> f1_aligned(f0.size());
    std::vector<double> f1_residual(f0.size());
    std::vector<double> lambda_abs(f0.size());
    for (std::size_t l = 0; l < f0.size(); ++l) {
        auto aligned = procrustes_align(f1[l], f0[l]);
        f1_residual[l] = aligned.residual;
        f1_aligned[l] = std::move(aligned.aligned);
        const double n_entries = static_cast<double>(f0[l].data.size());
        const double msq = (kernels::det_dot(f0[l].data, f0[l].data) +
                            kernels::det_dot(f1_aligned[l].data, f1_aligned[l].data)) /
                           (2.0 * n_entries);
        lambda_abs[l] = ridge_lambda_rel * msq;
    }

    LLFCReport report;
    report.ridge_lambda_rel = ridge_lambda_rel;
    for (double alpha : alphas) {
        const Checkpoint merged = interpolate(theta0, theta_ft, alpha);
        const auto fi = extract_features(merged, probe);
        for (std::size_t l = 0; l < f0.size(); ++l) {
            auto aligned = procrustes_align(fi[l], f0[l]);
            const LlfcFit fit = llfc_regress(aligned.aligned, f0[l], f1_aligned[l], lambda_abs[l]);
            LlfcRow row;
            row.alpha = alpha;
            row.layer = static_cast<int>(l);
            row.b0 = fit.b0;
            row.b1 = fit.b1;
            row.r2 = fit.r2;
            row.align_residual = aligned.residual;
            row.align_residual_ft = f1_residual[l];
            report.rows.push_back(row);
        }
    }
    return report;
}

std::string LLFCReport::to_json() const {
    json rows_json = json::array();
    for (const auto& r : rows) {
        rows_json.push_back({{"alpha", r.alpha},
                             {"layer", r.layer},
                             {"b0", r.b0},
                             {"b1", r.b1},
                             {"r2", r.r2},
                             {"align_residual", r.align_residual},
                             {"align_residual_ft", r.align_residual_ft}});
    }
    return json{{"ridge_lambda_rel", ridge_lambda_rel}, {"rows", rows_json}}.dump(2);
}

std::string LLFCReport::to_csv() const {
    std::string out = "alpha,layer,b0,b1,r2,align_residual,align_residual_ft\n";
    for (const auto& r : rows) {
        out += fmt_double(r.alpha) + "," + std::to_string(r.layer) + "," + fmt_double(r.b0) + "," +
               fmt_double(r.b1) + "," + fmt_double(r.r2) + "," + fmt_double(r.align_residual) + "," +
               fmt_double(r.align_residual_ft) + "\n";
    }
    return out;
}

DriftReport drift_report(const Checkpoint& a, const Checkpoint& b, const ProbeSet& probe) {
    require_compat(a, b, "drift_report");
    const auto fa = extract_features(a, probe);
    const auto fb = extract_features(b, probe);
    DriftReport report;
    for (std::size_t l = 0; l < fa.size(); ++l) {
        const SimilarityResult sim = feature_similarity(fa[l], fb[l]);
        report.layers.push_back({static_cast<int>(l), sim.cosine, sim.l2});
    }
    report.weight_distortion = weight_distortion(a, b);
    return report;
}

std::string DriftReport::to_json() const {
    json layers_json = json::array();
    for (const auto& l : layers)
        layers_json.push_back({{"layer", l.layer}, {"cosine", l.cosine}, {"l2", l.l2}});
    return json{{"layers", layers_json},
                {"weight_distortion", weight_distortion},
                {"weight_distortion_definition",
                 "sqrt(sum of squared parameter differences) / parameter count"}}
        .dump(2);
}

std::string DriftReport::to_csv() const {
    std::string out = "layer,cosine,l2\n";
    for (const auto& l : layers)
        out += std::to_string(l.layer) + "," + fmt_double(l.cosine) + "," + fmt_double(l.l2) + "\n";
    return out;
}

}  // namespace ckt
