#include "ckt/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

// Container layout:
//   8-byte little-endian unsigned header length N
//   N bytes of UTF-8 JSON:
//     { "tensors":  { name: {"dtype": "f32"|"f64", "shape": [...],
//                            "offset": int, "nbytes": int} },
//       "manifest": { "groups": { group: [tensor names] } },
//       "meta":     { key: value } }
//   raw tensor payloads, offsets relative to the end of the header,
//   contiguous, no padding. Row-major, little-endian.
//
// Saving is canonical: tensor names sorted, offsets assigned in sorted order,
// header serialized with sorted keys. Equal checkpoints produce equal bytes.

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

namespace ckt {

using json = nlohmann::json;

ModelManifest ModelManifest::empty() {
    ModelManifest m;
    m.groups["downsampling"] = {};
    m.groups["head"] = {};
    return m;
}

int ModelManifest::layer_count() const {
    int count = 0;
    for (const auto& [name, members] : groups) {
        if (name.rfind("layer.", 0) == 0) ++count;
    }
    return count;
}

std::vector<std::string> ModelManifest::group_names() const {
    std::vector<std::string> names;
    names.reserve(groups.size());
    for (const auto& [name, members] : groups) names.push_back(name);
    return names;
}

void ModelManifest::validate(const std::set<std::string>& tensor_names) const {
    if (!groups.count("downsampling")) throw std::runtime_error("manifest: missing group 'downsampling'");
    if (!groups.count("head")) throw std::runtime_error("manifest: missing group 'head'");

    std::set<int> layer_ids;
    for (const auto& [name, members] : groups) {
        if (name.rfind("layer.", 0) == 0) {
            const std::string idx = name.substr(6);
            if (idx.empty() || idx.find_first_not_of("0123456789") != std::string::npos)
                throw std::runtime_error("manifest: malformed layer group name '" + name + "'");
            layer_ids.insert(std::stoi(idx));
        }
    }
    int expected = 0;
    for (int id : layer_ids) {
        if (id != expected++)
            throw std::runtime_error("manifest: layer group indices not contiguous from 0");
    }

    std::set<std::string> seen;
    for (const auto& [name, members] : groups) {
        for (const auto& member : members) {
            if (!tensor_names.count(member))
                throw std::runtime_error("manifest: group '" + name + "' references unknown tensor '" +
                                         member + "'");
            if (!seen.insert(member).second)
                throw std::runtime_error("manifest: tensor '" + member + "' assigned to more than one group");
        }
    }
    for (const auto& t : tensor_names) {
        if (!seen.count(t))
            throw std::runtime_error("manifest: tensor '" + t + "' not assigned to any group");
    }
}

void Checkpoint::insert(Tensor t) {
    const std::string name = t.name;
    if (!tensors.emplace(name, std::move(t)).second)
        throw std::runtime_error("duplicate tensor name '" + name + "'");
}

const Tensor& Checkpoint::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::runtime_error("no tensor named '" + name + "'");
    return it->second;
}

std::int64_t Checkpoint::total_params() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : tensors) n += t.numel();
    return n;
}

void Checkpoint::validate() const {
    std::set<std::string> names;
    for (const auto& [name, t] : tensors) {
        if (name != t.name)
            throw std::runtime_error("tensor map key '" + name + "' does not match tensor name '" +
                                     t.name + "'");
        names.insert(name);
    }
    manifest.validate(names);
}

bool Checkpoint::bitwise_equal(const Checkpoint& other) const {
    if (tensors.size() != other.tensors.size()) return false;
    for (const auto& [name, t] : tensors) {
        auto it = other.tensors.find(name);
        if (it == other.tensors.end() || !t.bitwise_equal(it->second)) return false;
    }
    return manifest.groups == other.manifest.groups && meta == other.meta;
}

namespace {

json parse_header_checked(const std::string& text) {
    std::vector<std::set<std::string>> object_keys;
    auto cb = [&](int, json::parse_event_t event, json& parsed) {
        if (event == json::parse_event_t::object_start) {
            object_keys.emplace_back();
        } else if (event == json::parse_event_t::object_end) {
            object_keys.pop_back();
        } else if (event == json::parse_event_t::key) {
            const auto key = parsed.get<std::string>();
            if (!object_keys.back().insert(key).second)
                throw std::runtime_error("duplicate tensor name or key '" + key + "'");
        }
        return true;
    };
    return json::parse(text, cb);
}

}  // namespace

Checkpoint load_checkpoint(const std::string& path, const LoadOptions& opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint file '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < 8) throw std::runtime_error("malformed header: file shorter than length field");
    std::uint64_t header_len = 0;
    std::memcpy(&header_len, bytes.data(), 8);
    if (8 + header_len > bytes.size())
        throw std::runtime_error("malformed header: declared header length exceeds file size");

    json header;
    try {
        header = parse_header_checked(bytes.substr(8, header_len));
    } catch (const std::exception& e) {
        throw std::runtime_error("malformed header: " + std::string(e.what()));
    }
    if (!header.is_object() || !header.contains("tensors") || !header.contains("manifest") ||
        !header.contains("meta"))
        throw std::runtime_error("malformed header: missing tensors/manifest/meta");

    const char* payload = bytes.data() + 8 + header_len;
    const std::size_t payload_size = bytes.size() - 8 - header_len;

    Checkpoint ckpt;

    struct Extent {
        std::uint64_t offset, nbytes;
        std::string name;
    };
    std::vector<Extent> extents;

    for (const auto& [name, desc] : header.at("tensors").items()) {
        const DType dtype = dtype_from_name(desc.at("dtype").get<std::string>());
        const auto shape = desc.at("shape").get<std::vector<std::int64_t>>();
        const auto offset = desc.at("offset").get<std::uint64_t>();
        const auto nbytes = desc.at("nbytes").get<std::uint64_t>();

        std::int64_t numel = 1;
        for (std::int64_t d : shape) {
            if (d <= 0) throw std::runtime_error("tensor '" + name + "': non-positive shape dimension");
            numel *= d;
        }
        if (nbytes != static_cast<std::uint64_t>(numel) * dtype_size(dtype))
            throw std::runtime_error("payload length mismatch for tensor '" + name +
                                     "': header declares " + std::to_string(nbytes) + " bytes for " +
                                     std::to_string(numel) + " elements");
        if (offset + nbytes > payload_size)
            throw std::runtime_error("payload length mismatch: tensor '" + name +
                                     "' extends past end of file");

        std::vector<double> values(static_cast<std::size_t>(numel));
        if (dtype == DType::f32) {
            const float* src = reinterpret_cast<const float*>(payload + offset);
            for (std::int64_t i = 0; i < numel; ++i) values[static_cast<std::size_t>(i)] = src[i];
        } else {
            std::memcpy(values.data(), payload + offset, nbytes);
        }
        Tensor t = Tensor::make(name, dtype, shape, std::move(values));
        if (!opts.allow_nonfinite && !t.all_finite())
            throw std::runtime_error("non-finite value in tensor '" + name + "'");
        ckpt.insert(std::move(t));
        extents.push_back({offset, nbytes, name});
    }

    std::sort(extents.begin(), extents.end(),
              [](const Extent& a, const Extent& b) { return a.offset < b.offset; });
    std::uint64_t expected_offset = 0;
    for (const auto& e : extents) {
        if (e.offset != expected_offset)
            throw std::runtime_error("payload layout not contiguous at tensor '" + e.name + "'");
        expected_offset += e.nbytes;
    }
    if (expected_offset != payload_size)
        throw std::runtime_error("payload length mismatch: header declares " +
                                 std::to_string(expected_offset) + " payload bytes, file holds " +
                                 std::to_string(payload_size));

    if (header.at("manifest").contains("groups")) {
        for (const auto& [group, members] : header.at("manifest").at("groups").items())
            ckpt.manifest.groups[group] = members.get<std::vector<std::string>>();
    }
    for (const auto& [key, value] : header.at("meta").items())
        ckpt.meta[key] = value.get<std::string>();

    ckpt.validate();
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    ckpt.validate();

    json tensors = json::object();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : ckpt.tensors) {  // std::map: sorted, canonical order
        tensors[name] = {{"dtype", dtype_name(t.dtype)},
                         {"shape", t.shape},
                         {"offset", offset},
                         {"nbytes", t.nbytes()}};
        offset += t.nbytes();
    }
    json header = {{"tensors", tensors},
                   {"manifest", {{"groups", ckpt.manifest.groups}}},
                   {"meta", ckpt.meta}};
    const std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");

    const std::uint64_t header_len = header_text.size();
    out.write(reinterpret_cast<const char*>(&header_len), 8);
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));

    for (const auto& [name, t] : ckpt.tensors) {
        if (t.dtype == DType::f32) {
            std::vector<float> buf(t.values.size());
            for (std::size_t i = 0; i < t.values.size(); ++i) buf[i] = static_cast<float>(t.values[i]);
            out.write(reinterpret_cast<const char*>(buf.data()),
                      static_cast<std::streamsize>(buf.size() * sizeof(float)));
        } else {
            out.write(reinterpret_cast<const char*>(t.values.data()),
                      static_cast<std::streamsize>(t.values.size() * sizeof(double)));
        }
    }
    if (!out) throw std::runtime_error("I/O failure while writing '" + path + "'");
}

CompatReport check_compat(const Checkpoint& a, const Checkpoint& b) {
    CompatReport report;
    for (const auto& [name, ta] : a.tensors) {
        auto it = b.tensors.find(name);
        if (it == b.tensors.end()) {
            report.missing_in_b.push_back(name);
            continue;
        }
        if (ta.dtype != it->second.dtype) report.dtype_mismatches.push_back(name);
        if (ta.shape != it->second.shape) report.shape_mismatches.push_back(name);
    }
    for (const auto& [name, tb] : b.tensors) {
        if (!a.tensors.count(name)) report.missing_in_a.push_back(name);
    }
    return report;
}

bool CompatReport::compatible() const {
    return missing_in_a.empty() && missing_in_b.empty() && dtype_mismatches.empty() &&
           shape_mismatches.empty();
}

std::string CompatReport::to_string() const {
    if (compatible()) return "compatible";
    std::ostringstream os;
    for (const auto& n : missing_in_b) os << "missing in b: " << n << "\n";
    for (const auto& n : missing_in_a) os << "missing in a: " << n << "\n";
    for (const auto& n : dtype_mismatches) os << "dtype mismatch: " << n << "\n";
    for (const auto& n : shape_mismatches) os << "shape mismatch: " << n << "\n";
    return os.str();
}

void require_compat(const Checkpoint& a, const Checkpoint& b, const std::string& context) {
    const CompatReport report = check_compat(a, b);
    if (!report.compatible())
        throw std::runtime_error(context + ": checkpoints not merge-compatible\n" + report.to_string());
}

}  // namespace ckt
