#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include "dnc/dataset.hpp"
#include "dnc/errors.hpp"
#include "test_util.hpp"

using namespace dnc;
namespace fs = std::filesystem;

namespace {

GeoDataset small_dataset() {
    GeoDataset ds;
    ds.dim = 4;
    const float a[4] = {1, 0, 0, 0};
    const float b[4] = {0, 0.6f, 0.8f, 0};
    const float c[4] = {0.5f, 0.5f, 0.5f, 0.5f};
    ds.add("first", {0.1, 1e7 - 0.001}, a);
    ds.add("second", {-2.5, 3.0}, b);
    ds.add("third", {443.7, 1207.2}, c);
    return ds;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("dataset round trip preserves order and bits") {
    testutil::TempDir tmp;
    const auto ds = small_dataset();
    save_dataset(ds, tmp.path() / "bundle");
    const auto back = load_dataset(tmp.path() / "bundle");
    CHECK(back.dim == 4);
    CHECK(back.ids == ds.ids);
    CHECK(back.utm == ds.utm);
    REQUIRE(back.descriptors.size() == ds.descriptors.size());
    CHECK(std::memcmp(back.descriptors.data(), ds.descriptors.data(), ds.descriptors.size() * 4) == 0);
    CHECK(back.normalized());
}

TEST_CASE("blob layout is magic, u32 count, u32 dim, f32 payload") {
    testutil::TempDir tmp;
    GeoDataset one;
    one.dim = 4;
    const float v[4] = {1.0f, 0, 0, 0};
    one.add("only", {5, 6}, v);
    save_dataset(one, tmp.path());
    const auto blob = read_file(tmp.path() / kDescriptorFile);
    REQUIRE(blob.size() == 8 + 4 + 4 + 16);
    CHECK(blob.substr(0, 8) == "GEODSC01");
    CHECK(blob.substr(8, 4) == std::string("\x01\x00\x00\x00", 4));
    CHECK(blob.substr(12, 4) == std::string("\x04\x00\x00\x00", 4));
    // 1.0f little-endian is 00 00 80 3f.
    CHECK(blob.substr(16, 4) == std::string("\x00\x00\x80\x3f", 4));
    CHECK(read_file(tmp.path() / kMetadataFile) == "id,easting,northing\nonly,5,6\n");
}

TEST_CASE("empty dataset writes a valid header") {
    testutil::TempDir tmp;
    GeoDataset empty;
    empty.dim = 8;
    save_dataset(empty, tmp.path());
    const auto blob = read_file(tmp.path() / kDescriptorFile);
    CHECK(blob.size() == 16);
    const auto back = load_dataset(tmp.path());
    CHECK(back.empty());
    CHECK(back.dim == 8);
}

TEST_CASE("saving twice yields identical bytes") {
    testutil::TempDir tmp;
    const auto ds = small_dataset();
    save_dataset(ds, tmp.path() / "a");
    save_dataset(ds, tmp.path() / "b");
    CHECK(read_file(tmp.path() / "a" / kMetadataFile) == read_file(tmp.path() / "b" / kMetadataFile));
    CHECK(read_file(tmp.path() / "a" / kDescriptorFile) == read_file(tmp.path() / "b" / kDescriptorFile));
}

TEST_CASE("load rejects malformed bundles") {
    testutil::TempDir tmp;
    const auto ds = small_dataset();
    save_dataset(ds, tmp.path());

    SUBCASE("row count mismatch") {
        std::ofstream(tmp.path() / kMetadataFile, std::ios::trunc)
            << "id,easting,northing\nfirst,0,0\nsecond,1,1\n";
        try {
            load_dataset(tmp.path());
            FAIL("expected a format error");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("row-count mismatch") != std::string::npos);
        }
    }
    SUBCASE("bad magic") {
        auto blob = read_file(tmp.path() / kDescriptorFile);
        blob[7] = '2';
        std::ofstream(tmp.path() / kDescriptorFile, std::ios::binary | std::ios::trunc) << blob;
        CHECK_THROWS_AS(load_dataset(tmp.path()), FormatError);
    }
    SUBCASE("non-finite descriptor names the record") {
        auto blob = read_file(tmp.path() / kDescriptorFile);
        const char nan_bits[4] = {0, 0, '\xc0', '\x7f'};
        std::memcpy(blob.data() + 16 + 4 * 5, nan_bits, 4);  // record 1, component 1
        std::ofstream(tmp.path() / kDescriptorFile, std::ios::binary | std::ios::trunc) << blob;
        try {
            load_dataset(tmp.path());
            FAIL("expected a format error");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("record 1") != std::string::npos);
        }
    }
    SUBCASE("truncated payload") {
        auto blob = read_file(tmp.path() / kDescriptorFile);
        blob.resize(blob.size() - 3);
        std::ofstream(tmp.path() / kDescriptorFile, std::ios::binary | std::ios::trunc) << blob;
        CHECK_THROWS_AS(load_dataset(tmp.path()), FormatError);
    }
    SUBCASE("wrong metadata header") {
        std::ofstream(tmp.path() / kMetadataFile, std::ios::trunc) << "name,x,y\n";
        CHECK_THROWS_AS(load_dataset(tmp.path()), FormatError);
    }
    SUBCASE("missing bundle") {
        CHECK_THROWS_AS(load_dataset(tmp.path() / "nope"), FormatError);
    }
}

TEST_CASE("dataset validation") {
    auto ds = small_dataset();
    ds.ids[2] = "first";
    CHECK_THROWS_AS(ds.validate(), InvalidInput);
    testutil::TempDir tmp;
    CHECK_THROWS_AS(save_dataset(ds, tmp.path()), InvalidInput);

    GeoDataset bad;
    bad.dim = 2;
    const float v[3] = {1, 0, 0};
    CHECK_THROWS_AS(bad.add("x", {0, 0}, v), InvalidInput);
}

TEST_CASE("random datasets round trip bit-exactly") {
    testutil::TempDir tmp;
    std::mt19937_64 rng(5);
    std::normal_distribution<float> g(0.0f, 1.0f);
    std::uniform_real_distribution<double> c(-1e6, 1e6);
    for (int trial = 0; trial < 5; ++trial) {
        GeoDataset ds;
        ds.dim = 1 + trial * 7;
        for (int i = 0; i < 50; ++i) {
            std::vector<float> v(ds.dim);
            for (auto& x : v) x = g(rng);
            ds.add("r" + std::to_string(i), {c(rng), c(rng)}, v);
        }
        const auto dir = tmp.path() / std::to_string(trial);
        save_dataset(ds, dir);
        const auto back = load_dataset(dir);
        CHECK(back.ids == ds.ids);
        CHECK(back.utm == ds.utm);
        CHECK(std::memcmp(back.descriptors.data(), ds.descriptors.data(), ds.descriptors.size() * 4) == 0);
    }
}
