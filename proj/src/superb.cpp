#include "ckt/superb.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace ckt {

using json = nlohmann::json;

Direction direction_from_name(const std::string& s) {
    if (s == "higher_better") return Direction::higher_better;
    if (s == "lower_better") return Direction::lower_better;
    throw std::runtime_error("unknown direction '" + s + "'");
}

const char* direction_name(Direction d) {
    return d == Direction::higher_better ? "higher_better" : "lower_better";
}

void MetricRow::validate() const {
    if (baseline == sota)
        throw std::runtime_error("metric " + task + "/" + metric +
                                 ": baseline equals sota (normalization undefined)");
    if (direction == Direction::higher_better && !(sota > baseline))
        throw std::runtime_error("metric " + task + "/" + metric +
                                 ": higher_better requires sota > baseline");
    if (direction == Direction::lower_better && !(sota < baseline))
        throw std::runtime_error("metric " + task + "/" + metric +
                                 ": lower_better requires sota < baseline");
}

void MetricTable::validate() const {
    if (rows.empty()) throw std::runtime_error("metric table is empty");
    for (const auto& row : rows) row.validate();
}

double normalize_metric(const MetricRow& row) {
    row.validate();
    return (row.value - row.baseline) / (row.sota - row.baseline);
}

double superb_score(const MetricTable& table) {
    table.validate();
    // tasks keep first-appearance order; order does not affect the score
    std::vector<std::string> task_order;
    std::map<std::string, std::pair<double, int>> per_task;  // sum of phi, metric count
    for (const auto& row : table.rows) {
        auto [it, inserted] = per_task.try_emplace(row.task, 0.0, 0);
        if (inserted) task_order.push_back(row.task);
        it->second.first += normalize_metric(row);
        it->second.second += 1;
    }
    double total = 0.0;
    for (const auto& task : task_order) {
        const auto& [sum, count] = per_task.at(task);
        total += sum / static_cast<double>(count);
    }
    return 1000.0 * total / static_cast<double>(task_order.size());
}

std::map<std::string, double> superb_breakdown(const MetricTable& table) {
    table.validate();
    std::map<std::string, std::pair<double, int>> per_task;
    for (const auto& row : table.rows) {
        auto& acc = per_task[row.task];
        acc.first += normalize_metric(row);
        acc.second += 1;
    }
    std::map<std::string, double> out;
    for (const auto& [task, acc] : per_task) out[task] = acc.first / static_cast<double>(acc.second);
    return out;
}

namespace {

MetricRow row_from_json(const json& j, bool need_anchors) {
    MetricRow row;
    row.task = j.at("task").get<std::string>();
    row.metric = j.at("metric").get<std::string>();
    if (j.contains("direction")) row.direction = direction_from_name(j.at("direction").get<std::string>());
    if (j.contains("value")) row.value = j.at("value").get<double>();
    if (need_anchors || j.contains("baseline")) row.baseline = j.at("baseline").get<double>();
    if (need_anchors || j.contains("sota")) row.sota = j.at("sota").get<double>();
    return row;
}

json parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const std::exception& e) {
        throw std::runtime_error("'" + path + "': " + e.what());
    }
}

}  // namespace

MetricTable MetricTable::from_json_text(const std::string& text) {
    MetricTable table;
    const json j = json::parse(text);
    for (const auto& rj : j) table.rows.push_back(row_from_json(rj, true));
    table.validate();
    return table;
}

MetricTable MetricTable::from_json_file(const std::string& path) {
    MetricTable table;
    for (const auto& rj : parse_file(path)) table.rows.push_back(row_from_json(rj, true));
    table.validate();
    return table;
}

MetricTable MetricTable::join(const std::string& results_path, const std::string& anchors_path) {
    const json results = parse_file(results_path);
    const json anchors = parse_file(anchors_path);

    std::map<std::pair<std::string, std::string>, MetricRow> anchor_map;
    for (const auto& aj : anchors) {
        MetricRow row = row_from_json(aj, true);
        anchor_map[{row.task, row.metric}] = row;
    }

    MetricTable table;
    for (const auto& rj : results) {
        const auto task = rj.at("task").get<std::string>();
        const auto metric = rj.at("metric").get<std::string>();
        auto it = anchor_map.find({task, metric});
        MetricRow row;
        if (it != anchor_map.end()) {
            row = it->second;
        } else if (rj.contains("baseline") && rj.contains("sota")) {
            row = row_from_json(rj, true);
        } else {
            throw std::runtime_error("no anchors for metric " + task + "/" + metric);
        }
        row.value = rj.at("value").get<double>();
        if (rj.contains("direction"))
            row.direction = direction_from_name(rj.at("direction").get<std::string>());
        table.rows.push_back(row);
    }
    table.validate();
    return table;
}

std::string MetricTable::to_json() const {
    json out = json::array();
    for (const auto& row : rows) {
        out.push_back({{"task", row.task},
                       {"metric", row.metric},
                       {"direction", direction_name(row.direction)},
                       {"value", row.value},
                       {"baseline", row.baseline},
                       {"sota", row.sota}});
    }
    return out.dump(2);
}

}  // namespace ckt
