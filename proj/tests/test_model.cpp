#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include <nlohmann/json.hpp>

#include "dnc/errors.hpp"
#include "dnc/inference.hpp"
#include "dnc/model.hpp"
#include "fixtures.hpp"
#include "test_util.hpp"

using namespace dnc;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void dump(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream(p, std::ios::binary | std::ios::trunc) << bytes;
}

DncModel identity_model(std::size_t dim) {
    const ClassPartition part({20.0, 1, 1}, {{0, 0}});
    return init_model(part, HeadKind::aamc, dim, dim, 30.0, 0.4, 0);
}

}  // namespace

TEST_CASE("embed normalizes the projected descriptor") {
    const auto model = identity_model(4);
    SUBCASE("unit input passes through") {
        const std::vector<float> raw{0.0f, 0.6f, 0.0f, 0.8f};
        const auto x = embed(model, raw);
        for (std::size_t i = 0; i < 4; ++i) CHECK(x[i] == doctest::Approx(raw[i]).epsilon(1e-7));
    }
    SUBCASE("(3, 4, 0, 0) becomes (0.6, 0.8, 0, 0)") {
        const std::vector<float> raw{3.0f, 4.0f, 0.0f, 0.0f};
        const auto x = embed(model, raw);
        CHECK(x[0] == doctest::Approx(0.6f));
        CHECK(x[1] == doctest::Approx(0.8f));
        CHECK(x[2] == 0.0f);
    }
    SUBCASE("zero input falls back to the first basis vector") {
        const std::vector<float> raw(4, 0.0f);
        CHECK(embed(model, raw) == std::vector<float>{1.0f, 0.0f, 0.0f, 0.0f});
    }
    SUBCASE("dimension mismatch") {
        const std::vector<float> raw(5, 1.0f);
        CHECK_THROWS_AS(embed(model, raw), InvalidInput);
    }
}

TEST_CASE("init_model shapes and projection padding") {
    const ClassPartition part({20.0, 2, 1}, {{0, 0}, {0, 1}, {1, 0}, {2, 2}});
    const auto aamc = init_model(part, HeadKind::aamc, 6, 4, 30.0, 0.4, 3);
    CHECK(aamc.heads.size() == 4);
    CHECK(aamc.heads[0].weights.rows() == 2);  // (0,0) and (2,2)
    CHECK(aamc.heads[3].weights.rows() == 0);
    CHECK(aamc.projection(3, 3) == 1.0f);
    CHECK(aamc.projection(3, 5) == 0.0f);
    CHECK_NOTHROW(aamc.validate());

    const auto ce = init_model(part, HeadKind::ce, 4, 4, 30.0, 0.4, 3);
    CHECK(ce.heads[0].bias.size() == 2);
    CHECK_NOTHROW(ce.validate());
}

TEST_CASE("model files round-trip bit-exactly") {
    testutil::TempDir tmp;
    fixtures::SmallCity city;
    const auto part = build_partition(city.database, {});
    for (HeadKind kind : {HeadKind::aamc, HeadKind::ce}) {
        const auto model = init_model(part, kind, 16, 16, 30.0, 0.4, 11);
        const auto path = tmp.path() / "m.dnc";
        save_model(model, path);
        const auto back = load_model(path);
        CHECK(back.kind == kind);
        CHECK(back.projection == model.projection);
        CHECK(back.heads == model.heads);
        CHECK(back.partition.classes() == model.partition.classes());
        CHECK(back.scale == model.scale);
        CHECK(back.margin == model.margin);
        for (std::size_t q = 0; q < 10; ++q) {
            const auto a = predict(model, city.queries.descriptor(q)).entries;
            const auto b = predict(back, city.queries.descriptor(q)).entries;
            REQUIRE(a.size() == b.size());
            for (std::size_t i = 0; i < a.size(); ++i) {
                CHECK(a[i].cell == b[i].cell);
                CHECK(a[i].confidence == b[i].confidence);
            }
        }
        save_model(back, tmp.path() / "again.dnc");
        CHECK(slurp(path) == slurp(tmp.path() / "again.dnc"));
    }
}

TEST_CASE("payload size follows the header") {
    testutil::TempDir tmp;
    const ClassPartition part({20.0, 2, 1}, {{0, 0}, {0, 1}, {1, 0}});
    const auto model = init_model(part, HeadKind::aamc, 8, 4, 30.0, 0.4, 0);
    const auto path = tmp.path() / "m.dnc";
    save_model(model, path);
    const auto bytes = slurp(path);
    const auto first_nl = bytes.find('\n');
    const std::size_t offset = std::stoul(bytes.substr(first_nl - 12, 12));
    CHECK(bytes.size() - offset == 4 * (4 * 8 + 3 * 4));
    CHECK(bytes.rfind("DNCMODEL 1 ", 0) == 0);
}

TEST_CASE("corrupt model files are rejected") {
    testutil::TempDir tmp;
    const ClassPartition part({20.0, 2, 1}, {{0, 0}, {0, 1}, {1, 0}});
    const auto model = init_model(part, HeadKind::aamc, 4, 4, 30.0, 0.4, 0);
    const auto path = tmp.path() / "m.dnc";
    save_model(model, path);
    const auto bytes = slurp(path);

    SUBCASE("truncated payload") {
        dump(path, bytes.substr(0, bytes.size() - 4));
        CHECK_THROWS_AS(load_model(path), FormatError);
    }
    SUBCASE("extra payload") {
        dump(path, bytes + std::string(4, '\0'));
        CHECK_THROWS_AS(load_model(path), FormatError);
    }
    SUBCASE("three prototype blocks for N = 2") {
        const auto first_nl = bytes.find('\n');
        const std::size_t offset = std::stoul(bytes.substr(first_nl - 12, 12));
        auto header = nlohmann::json::parse(bytes.substr(first_nl + 1, offset - first_nl - 1));
        header["heads"].erase(header["heads"].size() - 1);
        const std::string text = header.dump(1) + "\n";
        char first[32];
        std::snprintf(first, sizeof(first), "DNCMODEL 1 %012zu\n", first_nl + 1 + text.size());
        dump(path, first + text + bytes.substr(offset));
        try {
            load_model(path);
            FAIL("expected a format error");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("prototype blocks") != std::string::npos);
        }
    }
    SUBCASE("bad magic") {
        auto edited = bytes;
        edited[0] = 'X';
        dump(path, edited);
        CHECK_THROWS_AS(load_model(path), FormatError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_model(tmp.path() / "none.dnc"), FormatError);
    }
}
