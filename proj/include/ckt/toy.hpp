#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ckt/checkpoint.hpp"
#include "ckt/schedule.hpp"
#include "ckt/superb.hpp"

namespace ckt {

// Synthetic classification task: inputs are standard normal vectors, the
// label is the argmax over a fixed set of informative coordinates. Train,
// val and probe splits come from independent seed-derived streams.
struct ToyTaskSpec {
    std::string id;
    int input_dim = 16;
    std::vector<int> label_coords;
    int classes = 4;
    std::int64_t train_samples = 4096;
    std::int64_t val_samples = 2048;
    std::int64_t probe_samples = 256;
    std::uint64_t seed = 1;

    void validate() const;
    int label_of(const double* x) const;
};

std::vector<ToyTaskSpec> load_task_specs(const std::string& path);
std::vector<ToyTaskSpec> task_specs_from_json_text(const std::string& text);
std::string task_specs_to_json(const std::vector<ToyTaskSpec>& specs);

struct Dataset {
    std::int64_t count = 0;
    int dim = 0;
    std::vector<double> x;  // row-major count x dim
    std::vector<int> y;

    const double* row(std::int64_t i) const { return x.data() + i * dim; }
};

enum class Split { train, val, probe };
Dataset make_split(const ToyTaskSpec& spec, Split split);

// Region of the shared head owned by one task.
struct HeadSlice {
    std::string task;
    int offset = 0;
    int classes = 0;
};

// Feed-forward model: front linear (group `downsampling`), L tanh blocks
// (`layer.<k>`), linear head (`head`). The head is partitioned into per-task
// slices; training a task only touches its slice rows.
struct ToyModel {
    int input_dim = 0;
    int hidden_dim = 0;
    int layers = 0;
    int output_dim = 0;
    std::vector<double> front_w, front_b;
    std::vector<std::vector<double>> layer_w, layer_b;
    std::vector<double> head_w, head_b;
    std::vector<HeadSlice> head_layout;

    static ToyModel init_random(int input_dim, int hidden_dim, int layers,
                                std::vector<HeadSlice> layout, std::uint64_t seed);
    static ToyModel from_checkpoint(const Checkpoint& ckpt);
    Checkpoint to_checkpoint() const;

    const HeadSlice& slice_for(const std::string& task) const;

    // Forward pass for one sample; `hidden` receives the post-tanh block
    // outputs (layers x hidden_dim), `logits` the head output.
    void forward(const double* x, std::vector<double>& front_out,
                 std::vector<double>& hidden, std::vector<double>& logits) const;
};

struct TrainOptions {
    double lr = 0.05;
    int batch = 32;
    int hidden_dim = 16;
    int layers = 3;
};

// Trains a fresh model on the mean of all task losses. Deterministic in seed.
Checkpoint pretrain_toy(const std::vector<ToyTaskSpec>& tasks, std::int64_t steps,
                        std::uint64_t seed, const TrainOptions& opts = {});

using StepObserver = std::function<void(std::int64_t step, const ToyModel& model)>;

// Stable fine-tuning: per-step trainable groups come from the schedule;
// everything else keeps its bits. schedule.total_steps must equal steps.
Checkpoint finetune_toy(const Checkpoint& theta0, const ToyTaskSpec& task,
                        const FreezeSchedule& schedule, std::int64_t steps, double lr,
                        std::uint64_t seed, int batch = 32, const StepObserver& observer = {});

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::map<std::string, double> per_group;  // group name -> vector rel error
};

// Analytic gradients vs central finite differences on one batch, per
// parameter group: ||g_a - g_n|| / max(||g_a|| + ||g_n||, 1e-12).
GradCheckResult grad_check(const ToyModel& model, const Dataset& batch, const std::string& task_id,
                           double epsilon);

// Accuracy per task on the val split, with chance level and 1.0 as anchors.
MetricTable eval_toy(const Checkpoint& ckpt, const std::vector<ToyTaskSpec>& tasks);

double dataset_loss(const ToyModel& model, const Dataset& data, const HeadSlice& slice);
double dataset_accuracy(const ToyModel& model, const Dataset& data, const HeadSlice& slice);

}  // namespace ckt
