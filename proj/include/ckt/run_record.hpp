#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace ckt {

inline constexpr const char* kToolkitVersion = "0.1.0";

// FNV-1a 64-bit digest, hex-encoded. Provenance fingerprint, not a
// cryptographic hash.
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::string file_digest(const std::string& path);

// Every CLI invocation that writes an artifact drops one of these next to
// it (as <artifact>.run.json).
struct RunRecord {
    std::string command;
    std::string config_json;  // resolved configuration, serialized
    std::map<std::string, std::string> input_digests;
    std::map<std::string, std::string> output_digests;
    double wall_time_s = 0.0;
    std::uint64_t seed = 0;

    void write_next_to(const std::string& artifact_path) const;
};

}  // namespace ckt
