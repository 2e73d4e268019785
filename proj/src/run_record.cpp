#include "ckt/run_record.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace ckt {

using json = nlohmann::json;

std::uint64_t fnv1a64(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for digest");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return std::string(buf);
}

void RunRecord::write_next_to(const std::string& artifact_path) const {
    json j = {{"command", command},
              {"wall_time_s", wall_time_s},
              {"seed", seed},
              {"version", kToolkitVersion},
              {"inputs", input_digests},
              {"outputs", output_digests}};
    if (!config_json.empty()) {
        try {
            j["config"] = json::parse(config_json);
        } catch (const std::exception&) {
            j["config"] = config_json;
        }
    }
    const std::string path = artifact_path + ".run.json";
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << j.dump(2) << "\n";
}

}  // namespace ckt
