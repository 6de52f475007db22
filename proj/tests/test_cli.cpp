#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <regex>
#include <sstream>

#include "cli.hpp"
#include "dnc/dataset.hpp"
#include "dnc/model.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using dnc::cli::run_cli;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

const fs::path kSnapshots = fs::path(DNC_TEST_DATA_DIR) / "cli_help";

}  // namespace

TEST_CASE("help output matches the snapshots") {
    for (const std::string sub : {"", "synth", "partition-info", "train", "infer", "eval", "bench", "ablate"}) {
        CAPTURE(sub);
        std::vector<std::string> args;
        if (!sub.empty()) args.push_back(sub);
        args.push_back("--help");
        const auto r = run(args);
        CHECK(r.code == 0);
        CHECK(r.out == slurp(kSnapshots / ((sub.empty() ? "main" : sub) + ".txt")));

        // Every option line carries a default or is required.
        std::istringstream lines(r.out);
        for (std::string line; std::getline(lines, line);) {
            if (line.rfind("  --", 0) != 0) continue;
            CAPTURE(line);
            CHECK((line.find('[') != std::string::npos || line.find("REQUIRED") != std::string::npos));
        }
    }
}

TEST_CASE("usage errors exit with 2") {
    CHECK(run({}).code == 2);
    CHECK(run({"train"}).code == 2);
    const auto missing = run({"train", "--out", "m.dnc"});
    CHECK(missing.code == 2);
    CHECK(missing.err.find("--dataset") != std::string::npos);
    CHECK(run({"synth", "--out", "x", "--bogus", "1"}).code == 2);
    CHECK(run({"eval", "--queries", "q", "--pipeline", "nearest"}).code == 2);
    CHECK(run({"nosuchcommand"}).code == 2);
}

TEST_CASE("domain errors exit with 1") {
    const auto r = run({"eval", "--model", "m", "--queries", "q", "--topn", "0"});
    CHECK(r.code == 1);
    CHECK(r.err.find("topn_cells") != std::string::npos);

    testutil::TempDir tmp;
    CHECK(run({"partition-info", "--dataset", (tmp.path() / "none").string()}).code == 1);
}

TEST_CASE("synth, train, infer and eval run end to end") {
    testutil::TempDir tmp;
    const auto city = (tmp.path() / "city").string();
    const auto synth = run({"synth", "--width", "600", "--height", "600", "--spacing", "5", "--dim", "64",
                            "--corr-len", "60", "--seed", "0", "--out", city});
    REQUIRE(synth.code == 0);
    const auto db = dnc::load_dataset(fs::path(city) / "database");
    CHECK(db.size() == 120 * 120);
    CHECK(db.dim == 64);
    CHECK(dnc::load_dataset(fs::path(city) / "queries").size() == 500);

    // Same seed, same bytes.
    const auto again = (tmp.path() / "again").string();
    REQUIRE(run({"synth", "--seed", "0", "--out", again}).code == 0);
    CHECK(slurp(fs::path(city) / "database" / "descriptors.bin") ==
          slurp(fs::path(again) / "database" / "descriptors.bin"));

    const auto model = (tmp.path() / "m.dnc").string();
    const auto train = run({"--verbosity", "warn", "train", "--dataset", city + "/database", "--out", model,
                            "--epochs", "4", "--iterations", "20", "--lr", "1e-3"});
    REQUIRE(train.code == 0);
    CHECK(dnc::load_model(model).partition.num_classes() == 900);

    const auto infer = run({"infer", "--model", model, "--queries", city + "/queries", "--topn", "2", "--csv",
                            (tmp.path() / "infer.csv").string()});
    CHECK(infer.code == 0);
    CHECK(slurp(tmp.path() / "infer.csv").rfind("id,rank,cell_e,cell_n,easting,northing,confidence\n", 0) == 0);

    const auto csv = (tmp.path() / "eval.csv").string();
    const auto json = (tmp.path() / "eval.json").string();
    const auto eval = run({"--threads", "2", "eval", "--model", model, "--database", city + "/database", "--queries",
                           city + "/queries", "--pipeline", "mixed", "--csv", csv, "--json", json});
    CHECK(eval.code == 0);
    CHECK(eval.out.find("threads: 2") != std::string::npos);
    CHECK(slurp(csv).rfind("pipeline,db_size,n,lr,ms_classify,ms_desc,ms_knn\n", 0) == 0);
    CHECK(slurp(json).find("\"pipeline\": \"mixed\"") != std::string::npos);

    // A mixed pipeline without a database is a configuration error.
    CHECK(run({"eval", "--model", model, "--queries", city + "/queries", "--pipeline", "mixed"}).code == 1);
}
