#include "ckt/schedule.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace ckt {

using json = nlohmann::json;

void FreezeSchedule::validate() const {
    if (total_steps < 1) throw std::runtime_error("schedule: total_steps must be >= 1");
    if (!(beta_percent >= 0.0 && beta_percent <= 100.0))
        throw std::runtime_error("schedule: beta_percent out of [0,100]");
    if (phases.empty()) throw std::runtime_error("schedule: no phases");

    std::int64_t expected = 1;
    for (const auto& phase : phases) {
        if (phase.from != expected)
            throw std::runtime_error("schedule: phase ranges must partition [1, total_steps]");
        if (phase.to < phase.from) throw std::runtime_error("schedule: empty phase range");
        if (phase.trainable.count("downsampling"))
            throw std::runtime_error("schedule: 'downsampling' can never be trainable");
        expected = phase.to + 1;
    }
    if (expected != total_steps + 1)
        throw std::runtime_error("schedule: phases do not cover [1, total_steps]");
}

const std::set<std::string>& FreezeSchedule::trainable_at(std::int64_t step) const {
    if (step < 1 || step > total_steps)
        throw std::runtime_error("step " + std::to_string(step) + " out of range [1, " +
                                 std::to_string(total_steps) + "]");
    for (const auto& phase : phases) {
        if (step >= phase.from && step <= phase.to) return phase.trainable;
    }
    throw std::runtime_error("schedule: no phase covers step " + std::to_string(step));
}

FreezeSchedule make_schedule(const ModelManifest& manifest, std::int64_t total_steps,
                             double beta_percent) {
    if (total_steps < 1) throw std::runtime_error("make_schedule: total_steps must be >= 1");
    if (!(beta_percent >= 0.0 && beta_percent <= 100.0))
        throw std::runtime_error("make_schedule: beta_percent out of [0,100]");

    // Warm-up boundary: floor(beta% * S).
    const std::int64_t boundary = static_cast<std::int64_t>(
        std::floor(beta_percent * static_cast<double>(total_steps) / 100.0));

    std::set<std::string> full;
    for (const auto& name : manifest.group_names()) {
        if (name != "downsampling") full.insert(name);
    }

    FreezeSchedule sched;
    sched.total_steps = total_steps;
    sched.beta_percent = beta_percent;
    if (boundary >= 1) sched.phases.push_back({1, std::min(boundary, total_steps), {"head"}});
    if (boundary < total_steps) sched.phases.push_back({boundary + 1, total_steps, full});
    sched.validate();
    return sched;
}

std::string FreezeSchedule::to_json() const {
    json phases_json = json::array();
    for (const auto& phase : phases) {
        phases_json.push_back({{"from", phase.from},
                               {"to", phase.to},
                               {"trainable", std::vector<std::string>(phase.trainable.begin(),
                                                                      phase.trainable.end())}});
    }
    json j = {{"total_steps", total_steps}, {"beta_percent", beta_percent}, {"phases", phases_json}};
    return j.dump(2);
}

FreezeSchedule FreezeSchedule::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("schedule: ") + e.what());
    }
    FreezeSchedule sched;
    sched.total_steps = j.at("total_steps").get<std::int64_t>();
    sched.beta_percent = j.at("beta_percent").get<double>();
    for (const auto& pj : j.at("phases")) {
        SchedulePhase phase;
        phase.from = pj.at("from").get<std::int64_t>();
        phase.to = pj.at("to").get<std::int64_t>();
        for (const auto& g : pj.at("trainable")) phase.trainable.insert(g.get<std::string>());
        sched.phases.push_back(std::move(phase));
    }
    sched.validate();
    return sched;
}

FreezeSchedule FreezeSchedule::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open schedule file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

void FreezeSchedule::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << to_json() << "\n";
}

}  // namespace ckt
