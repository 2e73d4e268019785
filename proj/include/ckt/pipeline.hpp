#pragma once

#include <map>
#include <string>
#include <vector>

#include "ckt/checkpoint.hpp"
#include "ckt/toy.hpp"

namespace ckt {

struct SweepRow {
    double alpha = 0.0;
    std::map<std::string, double> task_acc;
    double score = 0.0;
};

struct SweepTable {
    std::vector<SweepRow> rows;

    std::string to_json() const;
    std::string to_csv() const;
};

// Merge base/ft at each alpha, evaluate on the given tasks, and score with
// chance/1.0 anchors. When keep_dir is non-empty the merged checkpoints are
// written there as merged-<alpha>.ckpt.
SweepTable sweep_alpha(const Checkpoint& base, const Checkpoint& ft,
                       const std::vector<double>& alphas, const std::vector<ToyTaskSpec>& tasks,
                       const std::string& keep_dir = "");

// Declarative end-to-end run: pretrain -> schedule -> finetune (per task) ->
// merge -> eval/diagnostics/llfc/sweep, all seeded from the config. Returns
// artifact name -> path. Stage failures abort with a stage-tagged error.
std::map<std::string, std::string> run_pipeline(const std::string& config_json_text,
                                                const std::string& out_dir);

std::map<std::string, std::string> run_pipeline_file(const std::string& config_path,
                                                     const std::string& out_dir_override = "");

}  // namespace ckt
