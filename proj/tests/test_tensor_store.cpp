#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ckt/checkpoint.hpp"
#include "test_util.hpp"

using namespace ckt;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Assemble a container by hand, independent of save_checkpoint.
void write_container(const std::string& path, const json& header, const std::string& payload) {
    const std::string text = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

json basic_manifest(const json& groups) {
    return {{"groups", groups}};
}

}  // namespace

TEST_CASE("load: single f32 identity tensor") {
    const std::string path = tmp_path("ckt_identity.ckpt");
    const float data[4] = {1.0f, 0.0f, 0.0f, 1.0f};
    json header = {
        {"tensors", {{"w", {{"dtype", "f32"}, {"shape", {2, 2}}, {"offset", 0}, {"nbytes", 16}}}}},
        {"manifest", basic_manifest({{"downsampling", json::array()},
                                     {"head", {"w"}}})},
        {"meta", json::object()}};
    write_container(path, header, std::string(reinterpret_cast<const char*>(data), 16));

    const Checkpoint ckpt = load_checkpoint(path);
    const Tensor& w = ckpt.at("w");
    CHECK(w.dtype == DType::f32);
    CHECK(w.shape == std::vector<std::int64_t>{2, 2});
    CHECK(w.values == std::vector<double>{1.0, 0.0, 0.0, 1.0});
}

TEST_CASE("load: declared elements exceed payload") {
    const std::string path = tmp_path("ckt_short.ckpt");
    const float data[3] = {1.0f, 2.0f, 3.0f};
    json header = {
        {"tensors", {{"w", {{"dtype", "f32"}, {"shape", {4}}, {"offset", 0}, {"nbytes", 16}}}}},
        {"manifest", basic_manifest({{"downsampling", json::array()}, {"head", {"w"}}})},
        {"meta", json::object()}};
    write_container(path, header, std::string(reinterpret_cast<const char*>(data), 12));
    CHECK_THROWS_WITH_AS(load_checkpoint(path),
                         doctest::Contains("payload length mismatch"), std::runtime_error);
}

TEST_CASE("load: nbytes inconsistent with shape") {
    const std::string path = tmp_path("ckt_nbytes.ckpt");
    const float data[4] = {1, 2, 3, 4};
    json header = {
        {"tensors", {{"w", {{"dtype", "f32"}, {"shape", {4}}, {"offset", 0}, {"nbytes", 12}}}}},
        {"manifest", basic_manifest({{"downsampling", json::array()}, {"head", {"w"}}})},
        {"meta", json::object()}};
    write_container(path, header, std::string(reinterpret_cast<const char*>(data), 16));
    CHECK_THROWS_WITH_AS(load_checkpoint(path),
                         doctest::Contains("payload length mismatch"), std::runtime_error);
}

TEST_CASE("load: malformed header JSON") {
    const std::string path = tmp_path("ckt_badjson.ckpt");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    const std::uint64_t len = 5;
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write("{oops", 5);
    out.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("malformed header"),
                         std::runtime_error);
}

TEST_CASE("load: header length past end of file") {
    const std::string path = tmp_path("ckt_badlen.ckpt");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    const std::uint64_t len = 1000;
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write("{}", 2);
    out.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("malformed header"),
                         std::runtime_error);
}

TEST_CASE("load: duplicate tensor names rejected") {
    const std::string path = tmp_path("ckt_dup.ckpt");
    const float data[2] = {1.0f, 2.0f};
    // hand-build header text with a duplicate key
    const std::string text =
        R"({"tensors":{"w":{"dtype":"f32","shape":[1],"offset":0,"nbytes":4},)"
        R"("w":{"dtype":"f32","shape":[1],"offset":4,"nbytes":4}},)"
        R"("manifest":{"groups":{"downsampling":[],"head":["w"]}},"meta":{}})";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(data), 8);
    out.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("duplicate"), std::runtime_error);
}

TEST_CASE("load: non-finite values rejected unless allowed") {
    const std::string path = tmp_path("ckt_nan.ckpt");
    const double data[2] = {1.0, std::numeric_limits<double>::quiet_NaN()};
    json header = {
        {"tensors", {{"w", {{"dtype", "f64"}, {"shape", {2}}, {"offset", 0}, {"nbytes", 16}}}}},
        {"manifest", basic_manifest({{"downsampling", json::array()}, {"head", {"w"}}})},
        {"meta", json::object()}};
    write_container(path, header, std::string(reinterpret_cast<const char*>(data), 16));
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("non-finite"), std::runtime_error);

    LoadOptions opts;
    opts.allow_nonfinite = true;
    const Checkpoint ckpt = load_checkpoint(path, opts);
    CHECK(std::isnan(ckpt.at("w").values[1]));
}

TEST_CASE("load: payload gaps rejected") {
    const std::string path = tmp_path("ckt_gap.ckpt");
    std::string payload(24, '\0');
    json header = {
        {"tensors",
         {{"a", {{"dtype", "f64"}, {"shape", {1}}, {"offset", 0}, {"nbytes", 8}}},
          {"b", {{"dtype", "f64"}, {"shape", {1}}, {"offset", 16}, {"nbytes", 8}}}}},
        {"manifest", basic_manifest({{"downsampling", {"a"}}, {"head", {"b"}}})},
        {"meta", json::object()}};
    write_container(path, header, payload);
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("not contiguous"),
                         std::runtime_error);
}

TEST_CASE("save/load round trip over random checkpoints") {
    for (std::uint64_t i = 0; i < 12; ++i) {
        const DType dtype = i % 3 == 0 ? DType::f32 : DType::f64;
        Checkpoint ckpt = testutil::random_checkpoint(i, i * 17 + 1, dtype);
        ckpt.meta["note"] = "round trip " + std::to_string(i);

        const std::string path = tmp_path("ckt_rt_" + std::to_string(i) + ".ckpt");
        save_checkpoint(ckpt, path);
        const Checkpoint loaded = load_checkpoint(path);
        CHECK(loaded.bitwise_equal(ckpt));

        // canonical serialization: identical inputs -> identical bytes
        const std::string path2 = tmp_path("ckt_rt2_" + std::to_string(i) + ".ckpt");
        save_checkpoint(ckpt, path2);
        CHECK(read_bytes(path) == read_bytes(path2));

        // save(load(save(c))) is stable
        const std::string path3 = tmp_path("ckt_rt3_" + std::to_string(i) + ".ckpt");
        save_checkpoint(loaded, path3);
        CHECK(read_bytes(path) == read_bytes(path3));
    }
}

TEST_CASE("empty checkpoint is a valid minimal file") {
    Checkpoint ckpt;
    ckpt.manifest = ModelManifest::empty();
    const std::string path = tmp_path("ckt_empty.ckpt");
    save_checkpoint(ckpt, path);
    const Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.tensors.empty());
    CHECK(loaded.bitwise_equal(ckpt));
}

TEST_CASE("check_compat") {
    const Checkpoint a = testutil::random_checkpoint(3, 10);
    SUBCASE("identical checkpoints -> empty report") {
        CHECK(check_compat(a, a).compatible());
    }
    SUBCASE("missing tensor reported once") {
        Checkpoint b = a;
        b.tensors.erase("head.weight");
        b.manifest.groups["head"].clear();
        const CompatReport report = check_compat(a, b);
        CHECK_FALSE(report.compatible());
        REQUIRE(report.missing_in_b.size() == 1);
        CHECK(report.missing_in_b[0] == "head.weight");
        CHECK(report.missing_in_a.empty());
    }
    SUBCASE("shape mismatch reported") {
        Checkpoint a23;
        a23.manifest = ModelManifest::empty();
        a23.insert(Tensor::make("w", DType::f64, {2, 3}, std::vector<double>(6, 1.0)));
        a23.manifest.groups["head"] = {"w"};
        Checkpoint b32;
        b32.manifest = ModelManifest::empty();
        b32.insert(Tensor::make("w", DType::f64, {3, 2}, std::vector<double>(6, 1.0)));
        b32.manifest.groups["head"] = {"w"};
        const CompatReport report = check_compat(a23, b32);
        REQUIRE(report.shape_mismatches.size() == 1);
        CHECK(report.shape_mismatches[0] == "w");
    }
    SUBCASE("dtype mismatch reported") {
        Checkpoint b;
        b.manifest = a.manifest;
        for (const auto& [name, t] : a.tensors)
            b.insert(Tensor::make(name, DType::f32, t.shape, t.values));
        const CompatReport report = check_compat(a, b);
        CHECK(report.dtype_mismatches.size() == a.tensors.size());
    }
    SUBCASE("compatibility is an equivalence relation") {
        const Checkpoint b = testutil::reroll_values(a, 77);
        const Checkpoint c = testutil::reroll_values(a, 78);
        CHECK(check_compat(a, a).compatible());                 // reflexive
        CHECK(check_compat(a, b).compatible());
        CHECK(check_compat(b, a).compatible());                 // symmetric
        CHECK(check_compat(b, c).compatible());
        CHECK(check_compat(a, c).compatible());                 // transitive
    }
}

TEST_CASE("manifest validation") {
    Checkpoint ckpt;
    ckpt.insert(Tensor::make("w", DType::f64, {2}, {1.0, 2.0}));

    SUBCASE("missing reserved groups") {
        ckpt.manifest.groups["head"] = {"w"};
        CHECK_THROWS_WITH_AS(ckpt.validate(), doctest::Contains("downsampling"), std::runtime_error);
    }
    SUBCASE("unknown member") {
        ckpt.manifest = ModelManifest::empty();
        ckpt.manifest.groups["head"] = {"w", "ghost"};
        CHECK_THROWS_WITH_AS(ckpt.validate(), doctest::Contains("unknown tensor"), std::runtime_error);
    }
    SUBCASE("tensor in two groups") {
        ckpt.manifest = ModelManifest::empty();
        ckpt.manifest.groups["head"] = {"w"};
        ckpt.manifest.groups["downsampling"] = {"w"};
        CHECK_THROWS_WITH_AS(ckpt.validate(), doctest::Contains("more than one group"),
                             std::runtime_error);
    }
    SUBCASE("uncovered tensor") {
        ckpt.manifest = ModelManifest::empty();
        CHECK_THROWS_WITH_AS(ckpt.validate(), doctest::Contains("not assigned"), std::runtime_error);
    }
    SUBCASE("non-contiguous layer indices") {
        ckpt.manifest = ModelManifest::empty();
        ckpt.manifest.groups["head"] = {"w"};
        ckpt.manifest.groups["layer.1"] = {};
        CHECK_THROWS_WITH_AS(ckpt.validate(), doctest::Contains("contiguous"), std::runtime_error);
    }
}

TEST_CASE("f32 tensors quantize on construction") {
    const Tensor t = Tensor::make("x", DType::f32, {1}, {0.1});
    CHECK(t.values[0] == static_cast<double>(0.1f));
}
