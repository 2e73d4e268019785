#include "ckt/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "ckt/diagnostics.hpp"
#include "ckt/merge.hpp"
#include "ckt/rng.hpp"
#include "ckt/run_record.hpp"
#include "ckt/schedule.hpp"
#include "ckt/superb.hpp"

namespace ckt {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << text;
    if (text.empty() || text.back() != '\n') out << "\n";
}

[[noreturn]] void stage_error(const std::string& stage, const std::exception& e) {
    throw std::runtime_error("stage '" + stage + "': " + e.what());
}

}  // namespace

SweepTable sweep_alpha(const Checkpoint& base, const Checkpoint& ft,
                       const std::vector<double>& alphas, const std::vector<ToyTaskSpec>& tasks,
                       const std::string& keep_dir) {
    if (alphas.empty()) throw std::runtime_error("sweep_alpha: no alphas");
    SweepTable table;
    for (double alpha : alphas) {
        const Checkpoint merged = interpolate(base, ft, alpha);
        const MetricTable metrics = eval_toy(merged, tasks);
        SweepRow row;
        row.alpha = alpha;
        for (const auto& m : metrics.rows) row.task_acc[m.task] = m.value;
        row.score = superb_score(metrics);
        table.rows.push_back(std::move(row));
        if (!keep_dir.empty()) {
            fs::create_directories(keep_dir);
            save_checkpoint(merged, (fs::path(keep_dir) / ("merged-" + fmt_double(alpha) + ".ckpt")).string());
        }
    }
    return table;
}

std::string SweepTable::to_json() const {
    json rows_json = json::array();
    for (const auto& r : rows)
        rows_json.push_back({{"alpha", r.alpha}, {"metrics", r.task_acc}, {"score", r.score}});
    return json{{"rows", rows_json}}.dump(2);
}

std::string SweepTable::to_csv() const {
    std::string out = "alpha";
    if (!rows.empty()) {
        for (const auto& [task, acc] : rows.front().task_acc) out += ",acc_" + task;
    }
    out += ",score\n";
    for (const auto& r : rows) {
        out += fmt_double(r.alpha);
        for (const auto& [task, acc] : r.task_acc) out += "," + fmt_double(acc);
        out += "," + fmt_double(r.score) + "\n";
    }
    return out;
}

std::map<std::string, std::string> run_pipeline(const std::string& config_json_text,
                                                const std::string& out_dir) {
    json config;
    try {
        config = json::parse(config_json_text);
    } catch (const std::exception& e) {
        throw std::runtime_error("stage 'config': " + std::string(e.what()));
    }

    const auto t_start = std::chrono::steady_clock::now();
    std::map<std::string, std::string> artifacts;
    std::vector<std::string> artifact_paths;

    const std::uint64_t seed = config.value("seed", std::uint64_t{7});
    const std::string dir = !out_dir.empty() ? out_dir : config.value("out_dir", std::string("pipeline-out"));
    fs::create_directories(dir);
    auto out_path = [&dir](const std::string& name) { return (fs::path(dir) / name).string(); };

    auto add_artifact = [&](const std::string& name, const std::string& path) {
        artifacts[name] = path;
        artifact_paths.push_back(path);
    };

    // ---- tasks ----
    std::vector<ToyTaskSpec> tasks;
    try {
        if (!config.contains("tasks")) throw std::runtime_error("missing 'tasks'");
        tasks = task_specs_from_json_text(config.at("tasks").dump());
        // tasks without an explicit seed get one derived from the top seed
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            if (!config.at("tasks")[i].contains("seed")) tasks[i].seed = mix_seed(seed, 100 + i);
        }
        write_text(out_path("tasks.json"), task_specs_to_json(tasks));
        add_artifact("tasks", out_path("tasks.json"));
    } catch (const std::exception& e) {
        stage_error("tasks", e);
    }

    // ---- pretrain ----
    Checkpoint theta0;
    try {
        const json pj = config.value("pretrain", json::object());
        TrainOptions opts;
        opts.lr = pj.value("lr", 0.05);
        opts.batch = pj.value("batch", 32);
        const json mj = config.value("model", json::object());
        opts.hidden_dim = mj.value("hidden_dim", 16);
        opts.layers = mj.value("layers", 3);
        const std::int64_t steps = pj.value("steps", std::int64_t{3000});
        theta0 = pretrain_toy(tasks, steps, mix_seed(seed, 1), opts);
        save_checkpoint(theta0, out_path("pre.ckpt"));
        add_artifact("pretrained", out_path("pre.ckpt"));
    } catch (const std::exception& e) {
        stage_error("pretrain", e);
    }

    // ---- schedule + finetune ----
    std::vector<Checkpoint> finetuned;
    std::vector<std::string> ft_task_ids;
    try {
        if (!config.contains("finetune") || config.at("finetune").empty())
            throw std::runtime_error("missing 'finetune' entries");
        std::size_t fi = 0;
        for (const auto& fj : config.at("finetune")) {
            const std::string task_id = fj.at("task").get<std::string>();
            const ToyTaskSpec* task = nullptr;
            for (const auto& t : tasks)
                if (t.id == task_id) task = &t;
            if (!task) throw std::runtime_error("finetune task '" + task_id + "' not in tasks");

            const auto steps = fj.value("steps", std::int64_t{2000});
            const double beta = fj.value("beta_percent", 10.0);
            const double lr = fj.value("lr", 0.05);
            const int batch = fj.value("batch", 32);

            const FreezeSchedule sched = make_schedule(theta0.manifest, steps, beta);
            const std::string sched_path = out_path("schedule-" + task_id + ".json");
            sched.save(sched_path);
            add_artifact("schedule-" + task_id, sched_path);

            Checkpoint ft = finetune_toy(theta0, *task, sched, steps, lr, mix_seed(seed, 2 + fi), batch);
            const std::string ft_path = out_path("ft-" + task_id + ".ckpt");
            save_checkpoint(ft, ft_path);
            add_artifact("finetuned-" + task_id, ft_path);
            finetuned.push_back(std::move(ft));
            ft_task_ids.push_back(task_id);
            ++fi;
        }
    } catch (const std::exception& e) {
        stage_error("finetune", e);
    }

    // ---- merge ----
    Checkpoint merged;
    try {
        const json mj = config.value("merge", json::object());
        const std::string method = mj.value("method", std::string("interpolate"));
        const double alpha = mj.value("alpha", 0.25);
        if (method == "interpolate") {
            merged = interpolate(theta0, finetuned.front(), alpha);
        } else if (method == "linear") {
            merged = linear_merge(theta0, finetuned, alpha);
        } else if (method == "ties") {
            const double trim = mj.value("trim_fraction", 0.2);
            const TrimScope scope = mj.value("trim_scope", std::string("global")) == "per_tensor"
                                        ? TrimScope::per_tensor
                                        : TrimScope::global;
            merged = ties_merge(theta0, finetuned, alpha, trim, scope);
        } else if (method == "sequential") {
            merged = theta0;
            for (const auto& ft : finetuned) merged = sequential_step(merged, ft, alpha);
        } else {
            throw std::runtime_error("unknown merge method '" + method + "'");
        }
        save_checkpoint(merged, out_path("merged.ckpt"));
        add_artifact("merged", out_path("merged.ckpt"));
    } catch (const std::exception& e) {
        stage_error("merge", e);
    }

    // ---- eval ----
    try {
        if (config.value("eval", true)) {
            const MetricTable m0 = eval_toy(theta0, tasks);
            const MetricTable mf = eval_toy(finetuned.front(), tasks);
            const MetricTable mm = eval_toy(merged, tasks);
            json all = {{"pretrained", json::parse(m0.to_json())},
                        {"finetuned", json::parse(mf.to_json())},
                        {"merged", json::parse(mm.to_json())},
                        {"score",
                         {{"pretrained", superb_score(m0)},
                          {"finetuned", superb_score(mf)},
                          {"merged", superb_score(mm)}}}};
            write_text(out_path("eval.json"), all.dump(2));
            add_artifact("eval", out_path("eval.json"));
        }
    } catch (const std::exception& e) {
        stage_error("eval", e);
    }

    // ---- probe + diagnostics ----
    ProbeSet probe;
    try {
        const json dj = config.value("diagnostics", json::object());
        const auto probe_count = dj.value("probe_count", std::int64_t{256});
        probe = ProbeSet::gaussian(tasks.front().input_dim, probe_count, mix_seed(seed, 50));
        probe.save(out_path("probe.json"));
        add_artifact("probe", out_path("probe.json"));
        if (config.value("diagnostics", json::object()).value("enabled", true)) {
            const DriftReport drift = drift_report(theta0, merged, probe);
            write_text(out_path("diag.json"), drift.to_json());
            write_text(out_path("diag.csv"), drift.to_csv());
            add_artifact("diag", out_path("diag.json"));
        }
    } catch (const std::exception& e) {
        stage_error("diagnostics", e);
    }

    // ---- llfc ----
    try {
        if (config.contains("llfc")) {
            const json lj = config.at("llfc");
            const auto alphas = lj.value("alphas", std::vector<double>{0.25, 0.5, 0.75});
            const double ridge = lj.value("ridge_lambda_rel", 1e-6);
            const LLFCReport report = llfc_verify(theta0, finetuned.front(), alphas, probe, ridge);
            write_text(out_path("llfc.json"), report.to_json());
            write_text(out_path("llfc.csv"), report.to_csv());
            add_artifact("llfc", out_path("llfc.json"));
        }
    } catch (const std::exception& e) {
        stage_error("llfc", e);
    }

    // ---- sweep ----
    try {
        if (config.contains("sweep")) {
            const json sj = config.at("sweep");
            const auto alphas = sj.value("alphas", std::vector<double>{0.0, 0.1, 0.25, 0.5, 0.75, 1.0});
            const SweepTable table = sweep_alpha(theta0, finetuned.front(), alphas, tasks);
            write_text(out_path("sweep.json"), table.to_json());
            write_text(out_path("sweep.csv"), table.to_csv());
            add_artifact("sweep", out_path("sweep.json"));
        }
    } catch (const std::exception& e) {
        stage_error("sweep", e);
    }

    // ---- run records + status ----
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    RunRecord record;
    record.command = "pipeline";
    record.config_json = config.dump();
    record.seed = seed;
    record.wall_time_s = wall;
    for (const auto& path : artifact_paths) record.output_digests[path] = file_digest(path);
    for (const auto& path : artifact_paths) record.write_next_to(path);
    write_text(out_path("pipeline.status.json"),
               json{{"status", "ok"}, {"artifacts", artifacts}}.dump(2));
    return artifacts;
}

std::map<std::string, std::string> run_pipeline_file(const std::string& config_path,
                                                     const std::string& out_dir_override) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open pipeline config '" + config_path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return run_pipeline(text, out_dir_override);
}

}  // namespace ckt
