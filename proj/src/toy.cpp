#include "ckt/toy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ckt/kernels.hpp"
#include "ckt/rng.hpp"

namespace ckt {

using json = nlohmann::json;

void ToyTaskSpec::validate() const {
    if (id.empty()) throw std::runtime_error("task spec: empty id");
    if (input_dim < 1) throw std::runtime_error("task '" + id + "': input_dim must be >= 1");
    if (classes < 2) throw std::runtime_error("task '" + id + "': needs at least 2 classes");
    if (static_cast<int>(label_coords.size()) != classes)
        throw std::runtime_error("task '" + id + "': label_coords must have one coordinate per class");
    std::set<int> seen;
    for (int c : label_coords) {
        if (c < 0 || c >= input_dim)
            throw std::runtime_error("task '" + id + "': label coordinate out of range");
        if (!seen.insert(c).second)
            throw std::runtime_error("task '" + id + "': duplicate label coordinate");
    }
    if (train_samples < 1 || val_samples < 1 || probe_samples < 1)
        throw std::runtime_error("task '" + id + "': sample counts must be >= 1");
}

int ToyTaskSpec::label_of(const double* x) const {
    int best = 0;
    double best_v = x[label_coords[0]];
    for (int j = 1; j < classes; ++j) {
        const double v = x[label_coords[j]];
        if (v > best_v) {
            best_v = v;
            best = j;
        }
    }
    return best;
}

std::vector<ToyTaskSpec> load_task_specs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open task spec file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return task_specs_from_json_text(text);
    } catch (const std::exception& e) {
        throw std::runtime_error("task specs '" + path + "': " + e.what());
    }
}

std::vector<ToyTaskSpec> task_specs_from_json_text(const std::string& text) {
    const json j = json::parse(text);
    std::vector<ToyTaskSpec> specs;
    for (const auto& tj : j) {
        ToyTaskSpec spec;
        spec.id = tj.at("id").get<std::string>();
        spec.input_dim = tj.at("input_dim").get<int>();
        spec.label_coords = tj.at("label_coords").get<std::vector<int>>();
        spec.classes = tj.value("classes", static_cast<int>(spec.label_coords.size()));
        spec.train_samples = tj.value("train_samples", std::int64_t{4096});
        spec.val_samples = tj.value("val_samples", std::int64_t{2048});
        spec.probe_samples = tj.value("probe_samples", std::int64_t{256});
        spec.seed = tj.value("seed", std::uint64_t{1});
        spec.validate();
        specs.push_back(std::move(spec));
    }
    if (specs.empty()) throw std::runtime_error("no tasks");
    return specs;
}

std::string task_specs_to_json(const std::vector<ToyTaskSpec>& specs) {
    json out = json::array();
    for (const auto& s : specs) {
        out.push_back({{"id", s.id},
                       {"input_dim", s.input_dim},
                       {"label_coords", s.label_coords},
                       {"classes", s.classes},
                       {"train_samples", s.train_samples},
                       {"val_samples", s.val_samples},
                       {"probe_samples", s.probe_samples},
                       {"seed", s.seed}});
    }
    return out.dump(2);
}

Dataset make_split(const ToyTaskSpec& spec, Split split) {
    spec.validate();
    const std::uint64_t tag = split == Split::train ? 0x11 : (split == Split::val ? 0x22 : 0x33);
    Rng rng(mix_seed(spec.seed, tag));

    Dataset data;
    data.dim = spec.input_dim;
    data.count = split == Split::train ? spec.train_samples
                                       : (split == Split::val ? spec.val_samples : spec.probe_samples);
    data.x.resize(static_cast<std::size_t>(data.count) * spec.input_dim);
    data.y.resize(static_cast<std::size_t>(data.count));
    for (std::int64_t i = 0; i < data.count; ++i) {
        double* row = data.x.data() + i * spec.input_dim;
        for (int j = 0; j < spec.input_dim; ++j) row[j] = rng.normal();
        data.y[static_cast<std::size_t>(i)] = spec.label_of(row);
    }
    return data;
}

namespace {

std::string layout_to_string(const std::vector<HeadSlice>& layout) {
    std::ostringstream os;
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (i) os << ';';
        os << layout[i].task << ':' << layout[i].offset << ':' << layout[i].classes;
    }
    return os.str();
}

std::vector<HeadSlice> layout_from_string(const std::string& text) {
    std::vector<HeadSlice> layout;
    std::istringstream is(text);
    std::string item;
    while (std::getline(is, item, ';')) {
        const auto p1 = item.find(':');
        const auto p2 = item.find(':', p1 + 1);
        if (p1 == std::string::npos || p2 == std::string::npos)
            throw std::runtime_error("malformed head_layout entry '" + item + "'");
        HeadSlice slice;
        slice.task = item.substr(0, p1);
        slice.offset = std::stoi(item.substr(p1 + 1, p2 - p1 - 1));
        slice.classes = std::stoi(item.substr(p2 + 1));
        layout.push_back(std::move(slice));
    }
    return layout;
}

// matvec: out = W x + b, W row-major rows x cols
void affine(const std::vector<double>& w, const std::vector<double>& b, const double* x, int rows,
            int cols, double* out) {
    for (int r = 0; r < rows; ++r) {
        const double* wr = w.data() + static_cast<std::size_t>(r) * cols;
        double s = b[static_cast<std::size_t>(r)];
        for (int c = 0; c < cols; ++c) s += wr[c] * x[c];
        out[r] = s;
    }
}

struct Grads {
    std::vector<double> front_w, front_b;
    std::vector<std::vector<double>> layer_w, layer_b;
    std::vector<double> head_w, head_b;

    static Grads zeros_like(const ToyModel& m) {
        Grads g;
        g.front_w.assign(m.front_w.size(), 0.0);
        g.front_b.assign(m.front_b.size(), 0.0);
        g.layer_w.resize(m.layer_w.size());
        g.layer_b.resize(m.layer_b.size());
        for (std::size_t k = 0; k < m.layer_w.size(); ++k) {
            g.layer_w[k].assign(m.layer_w[k].size(), 0.0);
            g.layer_b[k].assign(m.layer_b[k].size(), 0.0);
        }
        g.head_w.assign(m.head_w.size(), 0.0);
        g.head_b.assign(m.head_b.size(), 0.0);
        return g;
    }
};

// Forward-only cross-entropy over the task slice.
double sample_loss(const ToyModel& m, const double* x, const HeadSlice& slice, int y) {
    std::vector<double> front_out, hidden, logits;
    m.forward(x, front_out, hidden, logits);
    const int off = slice.offset, c = slice.classes;
    double zmax = logits[static_cast<std::size_t>(off)];
    for (int j = 1; j < c; ++j) zmax = std::max(zmax, logits[static_cast<std::size_t>(off + j)]);
    double zsum = 0.0;
    for (int j = 0; j < c; ++j) zsum += std::exp(logits[static_cast<std::size_t>(off + j)] - zmax);
    return -(logits[static_cast<std::size_t>(off + y)] - zmax - std::log(zsum));
}

// Cross-entropy over the task slice for one sample; returns loss, adds
// weight-scaled gradients.
double backward_sample(const ToyModel& m, const double* x, const HeadSlice& slice, int y,
                       double weight, Grads& g) {
    std::vector<double> front_out(static_cast<std::size_t>(m.hidden_dim));
    std::vector<double> hidden(static_cast<std::size_t>(m.layers) * m.hidden_dim);
    std::vector<double> logits(static_cast<std::size_t>(m.output_dim));
    m.forward(x, front_out, hidden, logits);

    // softmax over the slice
    const int off = slice.offset, c = slice.classes;
    double zmax = logits[static_cast<std::size_t>(off)];
    for (int j = 1; j < c; ++j) zmax = std::max(zmax, logits[static_cast<std::size_t>(off + j)]);
    double zsum = 0.0;
    std::vector<double> p(static_cast<std::size_t>(c));
    for (int j = 0; j < c; ++j) {
        p[static_cast<std::size_t>(j)] = std::exp(logits[static_cast<std::size_t>(off + j)] - zmax);
        zsum += p[static_cast<std::size_t>(j)];
    }
    for (int j = 0; j < c; ++j) p[static_cast<std::size_t>(j)] /= zsum;
    const double loss = -(logits[static_cast<std::size_t>(off + y)] - zmax - std::log(zsum));

    const int h = m.hidden_dim;
    const double* h_last = m.layers > 0 ? hidden.data() + static_cast<std::size_t>(m.layers - 1) * h
                                        : front_out.data();

    // head rows outside the slice get zero gradient
    std::vector<double> dh(static_cast<std::size_t>(h), 0.0);
    for (int j = 0; j < c; ++j) {
        const int row = off + j;
        const double dz = (p[static_cast<std::size_t>(j)] - (j == y ? 1.0 : 0.0)) * weight;
        double* gw = g.head_w.data() + static_cast<std::size_t>(row) * h;
        const double* mw = m.head_w.data() + static_cast<std::size_t>(row) * h;
        for (int i = 0; i < h; ++i) {
            gw[i] += dz * h_last[i];
            dh[static_cast<std::size_t>(i)] += mw[i] * dz;
        }
        g.head_b[static_cast<std::size_t>(row)] += dz;
    }

    for (int k = m.layers - 1; k >= 0; --k) {
        const double* hk = hidden.data() + static_cast<std::size_t>(k) * h;
        const double* prev = k > 0 ? hidden.data() + static_cast<std::size_t>(k - 1) * h
                                   : front_out.data();
        std::vector<double> da(static_cast<std::size_t>(h));
        for (int i = 0; i < h; ++i)
            da[static_cast<std::size_t>(i)] = dh[static_cast<std::size_t>(i)] * (1.0 - hk[i] * hk[i]);

        std::vector<double> dprev(static_cast<std::size_t>(h), 0.0);
        double* gw = g.layer_w[static_cast<std::size_t>(k)].data();
        const double* mw = m.layer_w[static_cast<std::size_t>(k)].data();
        for (int r = 0; r < h; ++r) {
            const double dar = da[static_cast<std::size_t>(r)];
            double* gwr = gw + static_cast<std::size_t>(r) * h;
            const double* mwr = mw + static_cast<std::size_t>(r) * h;
            for (int i = 0; i < h; ++i) {
                gwr[i] += dar * prev[i];
                dprev[static_cast<std::size_t>(i)] += mwr[i] * dar;
            }
            g.layer_b[static_cast<std::size_t>(k)][static_cast<std::size_t>(r)] += dar;
        }
        dh.swap(dprev);
    }

    // front is linear: da == dh
    for (int r = 0; r < m.hidden_dim; ++r) {
        const double dr = dh[static_cast<std::size_t>(r)];
        double* gwr = g.front_w.data() + static_cast<std::size_t>(r) * m.input_dim;
        for (int i = 0; i < m.input_dim; ++i) gwr[i] += dr * x[i];
        g.front_b[static_cast<std::size_t>(r)] += dr;
    }

    return loss;
}

void apply_sgd(std::vector<double>& param, const std::vector<double>& grad, double lr) {
    for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
}

void update_groups(ToyModel& m, const Grads& g, double lr, const std::set<std::string>& groups) {
    if (groups.count("head")) {
        apply_sgd(m.head_w, g.head_w, lr);
        apply_sgd(m.head_b, g.head_b, lr);
    }
    for (int k = 0; k < m.layers; ++k) {
        if (groups.count("layer." + std::to_string(k))) {
            apply_sgd(m.layer_w[static_cast<std::size_t>(k)], g.layer_w[static_cast<std::size_t>(k)], lr);
            apply_sgd(m.layer_b[static_cast<std::size_t>(k)], g.layer_b[static_cast<std::size_t>(k)], lr);
        }
    }
    if (groups.count("downsampling")) {
        apply_sgd(m.front_w, g.front_w, lr);
        apply_sgd(m.front_b, g.front_b, lr);
    }
}

std::set<std::string> all_groups(const ToyModel& m) {
    std::set<std::string> groups = {"downsampling", "head"};
    for (int k = 0; k < m.layers; ++k) groups.insert("layer." + std::to_string(k));
    return groups;
}

}  // namespace

ToyModel ToyModel::init_random(int input_dim, int hidden_dim, int layers,
                               std::vector<HeadSlice> layout, std::uint64_t seed) {
    if (input_dim < 1 || hidden_dim < 1 || layers < 1)
        throw std::runtime_error("toy model: dimensions must be >= 1");
    if (layout.empty()) throw std::runtime_error("toy model: empty head layout");

    ToyModel m;
    m.input_dim = input_dim;
    m.hidden_dim = hidden_dim;
    m.layers = layers;
    m.head_layout = std::move(layout);
    m.output_dim = 0;
    for (const auto& s : m.head_layout) m.output_dim = std::max(m.output_dim, s.offset + s.classes);

    Rng rng(mix_seed(seed, 0xD1));
    auto fill = [&rng](std::vector<double>& v, double scale) {
        for (double& x : v) x = scale * rng.normal();
    };
    m.front_w.resize(static_cast<std::size_t>(hidden_dim) * input_dim);
    m.front_b.assign(static_cast<std::size_t>(hidden_dim), 0.0);
    fill(m.front_w, 1.0 / std::sqrt(static_cast<double>(input_dim)));
    m.layer_w.resize(static_cast<std::size_t>(layers));
    m.layer_b.resize(static_cast<std::size_t>(layers));
    for (int k = 0; k < layers; ++k) {
        m.layer_w[static_cast<std::size_t>(k)].resize(static_cast<std::size_t>(hidden_dim) * hidden_dim);
        m.layer_b[static_cast<std::size_t>(k)].assign(static_cast<std::size_t>(hidden_dim), 0.0);
        fill(m.layer_w[static_cast<std::size_t>(k)], 1.0 / std::sqrt(static_cast<double>(hidden_dim)));
    }
    m.head_w.resize(static_cast<std::size_t>(m.output_dim) * hidden_dim);
    m.head_b.assign(static_cast<std::size_t>(m.output_dim), 0.0);
    fill(m.head_w, 1.0 / std::sqrt(static_cast<double>(hidden_dim)));
    return m;
}

const HeadSlice& ToyModel::slice_for(const std::string& task) const {
    for (const auto& s : head_layout) {
        if (s.task == task) return s;
    }
    throw std::runtime_error("model head has no slice for task '" + task + "'");
}

void ToyModel::forward(const double* x, std::vector<double>& front_out, std::vector<double>& hidden,
                       std::vector<double>& logits) const {
    front_out.resize(static_cast<std::size_t>(hidden_dim));
    hidden.resize(static_cast<std::size_t>(layers) * hidden_dim);
    logits.resize(static_cast<std::size_t>(output_dim));

    affine(front_w, front_b, x, hidden_dim, input_dim, front_out.data());
    const double* cur = front_out.data();
    for (int k = 0; k < layers; ++k) {
        double* hk = hidden.data() + static_cast<std::size_t>(k) * hidden_dim;
        affine(layer_w[static_cast<std::size_t>(k)], layer_b[static_cast<std::size_t>(k)], cur,
               hidden_dim, hidden_dim, hk);
        for (int i = 0; i < hidden_dim; ++i) hk[i] = std::tanh(hk[i]);
        cur = hk;
    }
    affine(head_w, head_b, cur, output_dim, hidden_dim, logits.data());
}

Checkpoint ToyModel::to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.insert(Tensor::make("front.weight", DType::f64, {hidden_dim, input_dim}, front_w));
    ckpt.insert(Tensor::make("front.bias", DType::f64, {hidden_dim}, front_b));
    for (int k = 0; k < layers; ++k) {
        const std::string base = "layer." + std::to_string(k);
        ckpt.insert(Tensor::make(base + ".weight", DType::f64, {hidden_dim, hidden_dim},
                                 layer_w[static_cast<std::size_t>(k)]));
        ckpt.insert(Tensor::make(base + ".bias", DType::f64, {hidden_dim},
                                 layer_b[static_cast<std::size_t>(k)]));
    }
    ckpt.insert(Tensor::make("head.weight", DType::f64, {output_dim, hidden_dim}, head_w));
    ckpt.insert(Tensor::make("head.bias", DType::f64, {output_dim}, head_b));

    ckpt.manifest.groups["downsampling"] = {"front.bias", "front.weight"};
    for (int k = 0; k < layers; ++k) {
        const std::string base = "layer." + std::to_string(k);
        ckpt.manifest.groups[base] = {base + ".bias", base + ".weight"};
    }
    ckpt.manifest.groups["head"] = {"head.bias", "head.weight"};

    ckpt.meta["model.family"] = "toy_mlp";
    ckpt.meta["head_layout"] = layout_to_string(head_layout);
    ckpt.validate();
    return ckpt;
}

ToyModel ToyModel::from_checkpoint(const Checkpoint& ckpt) {
    ckpt.validate();
    const Tensor& fw = ckpt.at("front.weight");
    const Tensor& hw = ckpt.at("head.weight");
    if (fw.shape.size() != 2 || hw.shape.size() != 2)
        throw std::runtime_error("checkpoint does not look like a toy model");

    ToyModel m;
    m.hidden_dim = static_cast<int>(fw.shape[0]);
    m.input_dim = static_cast<int>(fw.shape[1]);
    m.layers = ckpt.manifest.layer_count();
    m.output_dim = static_cast<int>(hw.shape[0]);
    if (static_cast<int>(hw.shape[1]) != m.hidden_dim)
        throw std::runtime_error("toy model: head width does not match hidden dim");

    m.front_w = fw.values;
    m.front_b = ckpt.at("front.bias").values;
    m.layer_w.resize(static_cast<std::size_t>(m.layers));
    m.layer_b.resize(static_cast<std::size_t>(m.layers));
    for (int k = 0; k < m.layers; ++k) {
        const std::string base = "layer." + std::to_string(k);
        const Tensor& w = ckpt.at(base + ".weight");
        if (w.shape != std::vector<std::int64_t>{m.hidden_dim, m.hidden_dim})
            throw std::runtime_error("toy model: unexpected shape for " + base + ".weight");
        m.layer_w[static_cast<std::size_t>(k)] = w.values;
        m.layer_b[static_cast<std::size_t>(k)] = ckpt.at(base + ".bias").values;
    }
    m.head_w = hw.values;
    m.head_b = ckpt.at("head.bias").values;

    auto it = ckpt.meta.find("head_layout");
    if (it != ckpt.meta.end() && !it->second.empty()) {
        m.head_layout = layout_from_string(it->second);
    } else {
        m.head_layout = {{"_all", 0, m.output_dim}};
    }
    for (const auto& s : m.head_layout) {
        if (s.offset < 0 || s.offset + s.classes > m.output_dim)
            throw std::runtime_error("toy model: head slice '" + s.task + "' out of range");
    }
    return m;
}

Checkpoint pretrain_toy(const std::vector<ToyTaskSpec>& tasks, std::int64_t steps,
                        std::uint64_t seed, const TrainOptions& opts) {
    if (tasks.empty()) throw std::runtime_error("pretrain_toy: no tasks");
    if (steps < 1) throw std::runtime_error("pretrain_toy: steps must be >= 1");
    const int input_dim = tasks.front().input_dim;
    for (const auto& t : tasks) {
        t.validate();
        if (t.input_dim != input_dim)
            throw std::runtime_error("pretrain_toy: tasks must share input_dim");
    }

    std::vector<HeadSlice> layout;
    int offset = 0;
    for (const auto& t : tasks) {
        layout.push_back({t.id, offset, t.classes});
        offset += t.classes;
    }
    ToyModel model = ToyModel::init_random(input_dim, opts.hidden_dim, opts.layers, layout, seed);

    std::vector<Dataset> train;
    train.reserve(tasks.size());
    for (const auto& t : tasks) train.push_back(make_split(t, Split::train));

    Rng batch_rng(mix_seed(seed, 0xBA));
    const std::set<std::string> everything = all_groups(model);
    const double weight = 1.0 / (static_cast<double>(opts.batch) * static_cast<double>(tasks.size()));

    for (std::int64_t step = 1; step <= steps; ++step) {
        Grads grads = Grads::zeros_like(model);
        for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
            const HeadSlice& slice = model.slice_for(tasks[ti].id);
            const Dataset& data = train[ti];
            for (int b = 0; b < opts.batch; ++b) {
                const auto i = static_cast<std::int64_t>(
                    batch_rng.bounded(static_cast<std::uint64_t>(data.count)));
                backward_sample(model, data.row(i), slice, data.y[static_cast<std::size_t>(i)],
                                weight, grads);
            }
        }
        update_groups(model, grads, opts.lr, everything);
    }

    Checkpoint out = model.to_checkpoint();
    out.meta["trained.steps"] = std::to_string(steps);
    out.meta["trained.seed"] = std::to_string(seed);
    return out;
}

Checkpoint finetune_toy(const Checkpoint& theta0, const ToyTaskSpec& task,
                        const FreezeSchedule& schedule, std::int64_t steps, double lr,
                        std::uint64_t seed, int batch, const StepObserver& observer) {
    task.validate();
    schedule.validate();
    if (schedule.total_steps != steps)
        throw std::runtime_error("finetune_toy: schedule covers " +
                                 std::to_string(schedule.total_steps) + " steps, run has " +
                                 std::to_string(steps));

    ToyModel model = ToyModel::from_checkpoint(theta0);
    if (model.input_dim != task.input_dim)
        throw std::runtime_error("finetune_toy: task input_dim does not match model");
    const HeadSlice& slice = model.slice_for(task.id);

    const std::set<std::string> known = all_groups(model);
    for (const auto& phase : schedule.phases) {
        for (const auto& g : phase.trainable) {
            if (!known.count(g))
                throw std::runtime_error("finetune_toy: schedule group '" + g +
                                         "' not present in model");
        }
    }

    const Dataset train = make_split(task, Split::train);
    Rng batch_rng(mix_seed(seed, 0xF7));
    const double weight = 1.0 / static_cast<double>(batch);

    for (std::int64_t step = 1; step <= steps; ++step) {
        const std::set<std::string>& trainable = schedule.trainable_at(step);
        Grads grads = Grads::zeros_like(model);
        for (int b = 0; b < batch; ++b) {
            const auto i =
                static_cast<std::int64_t>(batch_rng.bounded(static_cast<std::uint64_t>(train.count)));
            backward_sample(model, train.row(i), slice, train.y[static_cast<std::size_t>(i)], weight,
                            grads);
        }
        update_groups(model, grads, lr, trainable);
        if (observer) observer(step, model);
    }

    Checkpoint out = model.to_checkpoint();
    out.meta = theta0.meta;
    out.meta["head_layout"] = layout_to_string(model.head_layout);
    out.meta["finetuned.task"] = task.id;
    out.meta["finetuned.steps"] = std::to_string(steps);
    out.meta["finetuned.seed"] = std::to_string(seed);
    return out;
}

GradCheckResult grad_check(const ToyModel& model, const Dataset& batch, const std::string& task_id,
                           double epsilon) {
    if (epsilon <= 0.0) throw std::runtime_error("grad_check: epsilon must be positive");
    const HeadSlice& slice = model.slice_for(task_id);
    const double weight = 1.0 / static_cast<double>(batch.count);

    Grads analytic = Grads::zeros_like(model);
    for (std::int64_t i = 0; i < batch.count; ++i)
        backward_sample(model, batch.row(i), slice, batch.y[static_cast<std::size_t>(i)], weight,
                        analytic);

    ToyModel probe = model;
    auto batch_loss = [&]() {
        double total = 0.0;
        for (std::int64_t i = 0; i < batch.count; ++i)
            total += sample_loss(probe, batch.row(i), slice, batch.y[static_cast<std::size_t>(i)]);
        return total * weight;
    };

    struct Block {
        std::string group;
        std::vector<double>* param;
        const std::vector<double>* grad;
    };
    std::vector<Block> blocks = {{"downsampling", &probe.front_w, &analytic.front_w},
                                 {"downsampling", &probe.front_b, &analytic.front_b}};
    for (int k = 0; k < probe.layers; ++k) {
        blocks.push_back({"layer." + std::to_string(k), &probe.layer_w[static_cast<std::size_t>(k)],
                          &analytic.layer_w[static_cast<std::size_t>(k)]});
        blocks.push_back({"layer." + std::to_string(k), &probe.layer_b[static_cast<std::size_t>(k)],
                          &analytic.layer_b[static_cast<std::size_t>(k)]});
    }
    blocks.push_back({"head", &probe.head_w, &analytic.head_w});
    blocks.push_back({"head", &probe.head_b, &analytic.head_b});

    std::map<std::string, double> diff_sq, a_sq, n_sq;
    for (const auto& block : blocks) {
        for (std::size_t i = 0; i < block.param->size(); ++i) {
            const double saved = (*block.param)[i];
            (*block.param)[i] = saved + epsilon;
            const double lp = batch_loss();
            (*block.param)[i] = saved - epsilon;
            const double lm = batch_loss();
            (*block.param)[i] = saved;
            const double numeric = (lp - lm) / (2.0 * epsilon);
            const double a = (*block.grad)[i];
            diff_sq[block.group] += (a - numeric) * (a - numeric);
            a_sq[block.group] += a * a;
            n_sq[block.group] += numeric * numeric;
        }
    }

    GradCheckResult result;
    for (const auto& [group, dsq] : diff_sq) {
        const double denom = std::max(std::sqrt(a_sq[group]) + std::sqrt(n_sq[group]), 1e-12);
        const double rel = std::sqrt(dsq) / denom;
        result.per_group[group] = rel;
        result.max_rel_error = std::max(result.max_rel_error, rel);
    }
    return result;
}

double dataset_loss(const ToyModel& model, const Dataset& data, const HeadSlice& slice) {
    std::vector<double> losses(static_cast<std::size_t>(data.count));
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < data.count; ++i) {
        losses[static_cast<std::size_t>(i)] =
            sample_loss(model, data.row(i), slice, data.y[static_cast<std::size_t>(i)]);
    }
    return kernels::det_sum(losses) / static_cast<double>(data.count);
}

double dataset_accuracy(const ToyModel& model, const Dataset& data, const HeadSlice& slice) {
    std::vector<double> correct(static_cast<std::size_t>(data.count));
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < data.count; ++i) {
        std::vector<double> front_out, hidden, logits;
        model.forward(data.row(i), front_out, hidden, logits);
        int best = 0;
        double best_v = logits[static_cast<std::size_t>(slice.offset)];
        for (int j = 1; j < slice.classes; ++j) {
            const double v = logits[static_cast<std::size_t>(slice.offset + j)];
            if (v > best_v) {
                best_v = v;
                best = j;
            }
        }
        correct[static_cast<std::size_t>(i)] = best == data.y[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    }
    return kernels::det_sum(correct) / static_cast<double>(data.count);
}

MetricTable eval_toy(const Checkpoint& ckpt, const std::vector<ToyTaskSpec>& tasks) {
    const ToyModel model = ToyModel::from_checkpoint(ckpt);
    MetricTable table;
    for (const auto& task : tasks) {
        task.validate();
        const HeadSlice& slice = model.slice_for(task.id);
        const Dataset val = make_split(task, Split::val);
        MetricRow row;
        row.task = task.id;
        row.metric = "acc";
        row.direction = Direction::higher_better;
        row.value = dataset_accuracy(model, val, slice);
        row.baseline = 1.0 / static_cast<double>(task.classes);  // chance level
        row.sota = 1.0;
        table.rows.push_back(std::move(row));
    }
    table.validate();
    return table;
}

}  // namespace ckt
