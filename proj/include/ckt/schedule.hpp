#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "ckt/checkpoint.hpp"

namespace ckt {

// Per-phase sets of trainable parameter groups over the fine-tuning run.
// Phase ranges are 1-based, inclusive, and partition [1, total_steps].
// `downsampling` is never trainable.
struct SchedulePhase {
    std::int64_t from = 1;
    std::int64_t to = 1;
    std::set<std::string> trainable;
};

struct FreezeSchedule {
    std::int64_t total_steps = 0;
    double beta_percent = 0.0;
    std::vector<SchedulePhase> phases;

    void validate() const;
    const std::set<std::string>& trainable_at(std::int64_t step) const;

    std::string to_json() const;
    static FreezeSchedule from_json_text(const std::string& text);
    static FreezeSchedule from_json_file(const std::string& path);
    void save(const std::string& path) const;
};

// Head-only warm-up for the first floor(beta_percent/100 * total_steps)
// steps, then everything except `downsampling`.
FreezeSchedule make_schedule(const ModelManifest& manifest, std::int64_t total_steps,
                             double beta_percent);

}  // namespace ckt
