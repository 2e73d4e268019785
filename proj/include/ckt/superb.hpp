#pragma once

#include <map>
#include <string>
#include <vector>

namespace ckt {

enum class Direction { higher_better, lower_better };

Direction direction_from_name(const std::string& s);
const char* direction_name(Direction d);

// One benchmark measurement with its normalization anchors. The anchor
// ordering encodes the metric direction, so normalization needs no branch;
// the direction flag is only validated against the anchors.
struct MetricRow {
    std::string task;
    std::string metric;
    Direction direction = Direction::higher_better;
    double value = 0.0;
    double baseline = 0.0;
    double sota = 1.0;

    void validate() const;
};

struct MetricTable {
    std::vector<MetricRow> rows;

    void validate() const;
    static MetricTable from_json_text(const std::string& text);
    static MetricTable from_json_file(const std::string& path);
    // Results without anchors joined against an anchors table on (task, metric).
    static MetricTable join(const std::string& results_path, const std::string& anchors_path);
    std::string to_json() const;
};

// (value - baseline) / (sota - baseline). Not clamped: beating SOTA gives
// values above 1, trailing the baseline goes negative.
double normalize_metric(const MetricRow& row);

// 1000/|T| * sum_t mean_j of normalized metrics.
double superb_score(const MetricTable& table);

// Per-task mean normalized metric, for breakdown output.
std::map<std::string, double> superb_breakdown(const MetricTable& table);

}  // namespace ckt
