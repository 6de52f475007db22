#include "cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "dnc/dataset.hpp"
#include "dnc/errors.hpp"
#include "dnc/evaluation.hpp"
#include "dnc/inference.hpp"
#include "dnc/model.hpp"
#include "dnc/parallel.hpp"
#include "dnc/retrieval.hpp"
#include "dnc/synth_city.hpp"
#include "dnc/train.hpp"

namespace fs = std::filesystem;

namespace dnc::cli {

namespace {

// Query positions and noise come from their own stream so that changing the
// query count leaves the database untouched.
constexpr std::uint64_t kQuerySeedOffset = 1000;

struct Global {
    std::uint64_t seed = 0;
    unsigned threads = 0;
    std::string verbosity = "info";
};

struct PartitionOpts {
    double cell_size = 20.0;
    int group_stride = 2;
    std::size_t min_images = 1;

    PartitionConfig config() const { return {cell_size, group_stride, min_images}; }
};

struct TrainOpts {
    std::string head = "aamc";
    std::size_t epochs = 40;
    std::size_t iterations = 2000;
    std::size_t batch = 64;
    double lr = 1e-4;
    double scale = 30.0;
    double margin = 0.4;
    std::size_t embed_dim = 0;
    std::string sampling = "uniform";

    TrainConfig config(std::uint64_t seed) const {
        TrainConfig c;
        c.epochs = epochs;
        c.iterations_per_epoch = iterations;
        c.batch_size = batch;
        c.learning_rate = lr;
        c.scale = scale;
        c.margin = margin;
        c.embed_dim = embed_dim;
        c.sampling = sampling == "class-balanced" ? Sampling::class_balanced : Sampling::uniform;
        c.seed = seed;
        return c;
    }
};

void add_partition_options(CLI::App* sub, PartitionOpts& p) {
    sub->add_option("--cell-size", p.cell_size, "Cell side M in meters")->check(CLI::PositiveNumber);
    sub->add_option("--group-stride", p.group_stride, "Group stride N (N^2 groups)")->check(CLI::PositiveNumber);
    sub->add_option("--min-images", p.min_images, "Cells with fewer images are dropped")->check(CLI::PositiveNumber);
}

void add_train_options(CLI::App* sub, TrainOpts& t, bool with_head) {
    if (with_head) {
        sub->add_option("--head", t.head, "Classifier head")->check(CLI::IsMember({"aamc", "ce"}));
    }
    sub->add_option("--epochs", t.epochs, "Epochs; each trains one group");
    sub->add_option("--iterations", t.iterations, "Iterations per epoch")->check(CLI::PositiveNumber);
    sub->add_option("--batch", t.batch, "Batch size")->check(CLI::PositiveNumber);
    sub->add_option("--lr", t.lr, "Adam learning rate");
    sub->add_option("--scale", t.scale, "ArcFace scale s");
    sub->add_option("--margin", t.margin, "ArcFace margin m in radians");
    sub->add_option("--embed-dim", t.embed_dim, "Embedding dim, 0 keeps the descriptor dim");
    sub->add_option("--sampling", t.sampling, "Batch sampling")
        ->check(CLI::IsMember({"uniform", "class-balanced"}));
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error("cannot open " + path.string() + " for writing");
    f << text;
}

void emit_rows(std::ostream& out, std::span<const BenchRow> rows, const std::string& csv, const std::string& json) {
    write_table(out, rows);
    if (!csv.empty()) {
        std::ostringstream s;
        write_csv(s, rows);
        write_text(csv, s.str());
    }
    if (!json.empty()) write_text(json, to_json(rows).dump(2) + "\n");
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

// ---------------------------------------------------------------- synth

struct SynthOpts {
    CityParams city;
    QueryParams queries;
    std::string out;
};

void cmd_synth(const SynthOpts& o, const Global& g, std::ostream& out) {
    CityParams city = o.city;
    city.seed = g.seed;
    QueryParams qp = o.queries;
    qp.seed = g.seed + kQuerySeedOffset;
    const auto db = generate_city(city);
    const auto q = generate_queries(city, qp);
    const fs::path root(o.out);
    save_dataset(db, root / "database");
    save_dataset(q, root / "queries");
    out << "database: " << db.size() << " records, dim " << db.dim << " -> " << (root / "database").string() << "\n";
    out << "queries:  " << q.size() << " records -> " << (root / "queries").string() << "\n";
}

// ---------------------------------------------------------------- partition-info

void cmd_partition_info(const std::string& dataset, const PartitionOpts& p, std::ostream& out) {
    const auto ds = load_dataset(dataset);
    const auto part = build_partition(ds, p.config());
    std::size_t dropped = 0;
    for (auto c : part.class_of_image()) dropped += c < 0 ? 1 : 0;
    out << "images:  " << ds.size() << " (" << dropped << " in dropped cells)\n";
    out << "classes: " << part.num_classes() << "\n";
    out << "groups:  " << part.num_groups() << "\n";
    for (int k = 0; k < part.num_groups(); ++k) {
        const auto g = group_from_ordinal(k, p.group_stride);
        out << "  group (" << g.u << "," << g.v << "): " << part.group_classes(k).size() << " classes, "
            << part.group_images(k).size() << " images\n";
    }
}

// ---------------------------------------------------------------- train

void cmd_train(const std::string& dataset, const std::string& out_path, const PartitionOpts& p, const TrainOpts& t,
               const Global& g, std::ostream& out) {
    const auto cfg = t.config(g.seed);
    cfg.validate();
    const auto kind = parse_head_kind(t.head);
    const auto ds = load_dataset(dataset);
    const auto part = build_partition(ds, p.config());
    spdlog::info("training {} head: {} classes in {} groups, {} epochs x {} iterations", t.head,
                 part.num_classes(), part.num_groups(), cfg.epochs, cfg.iterations_per_epoch);
    std::vector<EpochStats> history;
    const auto model = train(ds, part, cfg, kind, &history);
    for (const auto& e : history) {
        if (!e.skipped) spdlog::info("epoch {:>3} group {:>2} loss {:.5f}", e.epoch, e.group, e.mean_loss);
    }
    save_model(model, out_path);
    out << "model: " << part.num_classes() << " classes, " << part.num_groups() << " heads -> " << out_path << "\n";
}

// ---------------------------------------------------------------- infer

void cmd_infer(const std::string& model_path, const std::string& queries_path, std::size_t topn,
               const std::string& csv, std::ostream& out) {
    if (topn == 0) throw InvalidInput("topn_cells: n must be >= 1");
    const auto model = load_model(model_path);
    const auto queries = load_dataset(queries_path);
    const bool has_std = model.partition.num_groups() >= 2;
    const double m = model.partition.config().cell_size;
    std::ostringstream rows;
    rows << "id,rank,cell_e,cell_n,easting,northing,confidence\n";
    char buf[256];
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const auto x = embed(model, queries.descriptor(q));
        const auto top = top_predictions_embedded(model, x, topn);
        const auto center = class2utm(top.front().cell, m);
        std::snprintf(buf, sizeof(buf), "%s  top1 (%.1f, %.1f) conf %.4f", queries.ids[q].c_str(), center.easting,
                      center.northing, top.front().confidence);
        out << buf;
        if (has_std) out << "  std " << fmt_double(confidence_std(model, queries.descriptor(q)));
        out << "\n";
        for (std::size_t r = 0; r < top.size(); ++r) {
            const auto c = class2utm(top[r].cell, m);
            std::snprintf(buf, sizeof(buf), "%s,%zu,%lld,%lld,%.3f,%.3f,%.6f\n", queries.ids[q].c_str(), r + 1,
                          static_cast<long long>(top[r].cell.e), static_cast<long long>(top[r].cell.n), c.easting,
                          c.northing, top[r].confidence);
            rows << buf;
        }
    }
    if (!csv.empty()) write_text(csv, rows.str());
}

// ---------------------------------------------------------------- eval

struct EvalOpts {
    std::string model;
    std::string database;
    std::string queries;
    std::string pipeline = "classify";
    std::size_t topn = 25;
    std::size_t nprobe = 1;
    std::size_t nlist = 64;
    std::size_t kmeans_iters = 20;
    std::vector<std::size_t> ns{1, 5, 10, 20};
    double threshold = kDefaultThreshold;
    std::string csv;
    std::string json;
};

struct Loaded {
    std::optional<DncModel> model;
    std::optional<GeoDataset> database;
    GeoDataset queries;
};

double index_cell_size(const Loaded& l) { return l.model ? l.model->partition.config().cell_size : 20.0; }

void cmd_eval(const EvalOpts& o, const Global& g, std::ostream& out) {
    if (o.topn == 0) throw InvalidInput("topn_cells: n must be >= 1");
    const auto kind = parse_pipeline(o.pipeline);
    Loaded l;
    if (!o.model.empty()) l.model = load_model(o.model);
    if (!o.database.empty()) l.database = load_dataset(o.database);
    l.queries = load_dataset(o.queries);

    std::optional<FlatIndex> flat;
    std::optional<IvfFlatIndex> ivf;
    if (l.database) {
        flat.emplace(*l.database, index_cell_size(l));
        if (kind == PipelineKind::ivf) {
            ivf = build_ivf(*flat, std::min(o.nlist, flat->size()), o.kmeans_iters, g.seed);
        }
    }
    PipelineParams params;
    params.ns = o.ns;
    params.topn = o.topn;
    params.nprobe = o.nprobe;
    params.threshold = o.threshold;
    params.threads = g.threads;
    const auto report = run_pipeline(kind, {l.model ? &*l.model : nullptr, flat ? &*flat : nullptr,
                                            ivf ? &*ivf : nullptr},
                                     l.queries, params);
    out << "threads: " << report.threads << "\n";
    const auto rows = report_rows(report);
    emit_rows(out, rows, o.csv, o.json);
}

// ---------------------------------------------------------------- bench

struct BenchOpts {
    std::string model;
    std::string database;
    std::string queries;
    std::vector<std::size_t> sizes{2000, 4000, 8000, 0};
    std::vector<std::string> pipelines{"exhaustive", "ivf", "classify", "mixed"};
    std::size_t topn = 100;
    std::size_t nprobe = 1;
    std::size_t nlist = 64;
    std::size_t kmeans_iters = 20;
    std::size_t repeats = 3;
    std::vector<std::size_t> ns{1};
    double threshold = kDefaultThreshold;
    std::string csv;
    std::string json;
};

void cmd_bench(const BenchOpts& o, const Global& g, std::ostream& out) {
    if (o.topn == 0) throw InvalidInput("topn_cells: n must be >= 1");
    BenchConfig cfg;
    for (const auto& p : o.pipelines) cfg.pipelines.push_back(parse_pipeline(p));
    std::optional<DncModel> model;
    if (!o.model.empty()) model = load_model(o.model);
    const auto db = load_dataset(o.database);
    const auto queries = load_dataset(o.queries);
    for (auto s : o.sizes) cfg.db_sizes.push_back(s == 0 ? db.size() : s);
    cfg.params.ns = o.ns;
    cfg.params.topn = o.topn;
    cfg.params.nprobe = o.nprobe;
    cfg.params.threshold = o.threshold;
    cfg.params.threads = g.threads;
    cfg.nlist = o.nlist;
    cfg.kmeans_iters = o.kmeans_iters;
    cfg.repeats = std::max<std::size_t>(1, o.repeats);
    cfg.seed = g.seed;
    out << "threads: " << resolve_threads(g.threads) << "\n";
    const auto rows = benchmark_scaling(db, queries, model ? &*model : nullptr, cfg);
    emit_rows(out, rows, o.csv, o.json);
}

// ---------------------------------------------------------------- ablate

struct AblateOpts {
    std::string study = "mn";
    std::string model;
    std::string database;
    std::string queries;
    std::vector<double> cell_sizes{20, 50, 100};
    std::vector<int> group_strides{1, 2, 3};
    PartitionOpts partition;
    TrainOpts train;
    std::size_t sample = 500;
    double threshold = kDefaultThreshold;
    std::string csv;
};

void require(const std::string& value, const char* flag, const std::string& study) {
    if (value.empty()) throw ConfigError("ablate --study " + study + " needs " + flag);
}

void cmd_ablate(const AblateOpts& o, const Global& g, std::ostream& out) {
    char buf[256];
    if (o.study == "mn") {
        require(o.database, "--database", o.study);
        require(o.queries, "--queries", o.study);
        const auto cfg = o.train.config(g.seed);
        cfg.validate();
        const auto grid = ablate_mn(load_dataset(o.database), load_dataset(o.queries), o.cell_sizes,
                                    o.group_strides, cfg, g.threads);
        std::ostringstream csv;
        csv << "cell_size,group_stride,lr1\n";
        out << "    M    N    LR@1\n";
        for (const auto& c : grid) {
            std::snprintf(buf, sizeof(buf), "%5.0f %4d %7.2f\n", c.cell_size, c.group_stride, c.lr1);
            out << buf;
            std::snprintf(buf, sizeof(buf), "%g,%d,%.4f\n", c.cell_size, c.group_stride, c.lr1);
            csv << buf;
        }
        if (!o.csv.empty()) write_text(o.csv, csv.str());
    } else if (o.study == "head") {
        require(o.database, "--database", o.study);
        require(o.queries, "--queries", o.study);
        const auto cfg = o.train.config(g.seed);
        cfg.validate();
        const auto cmp = ablate_head(load_dataset(o.database), load_dataset(o.queries), o.partition.config(), cfg,
                                     g.threads);
        auto rows = report_rows(cmp.aamc);
        for (auto& r : rows) r.pipeline = "aamc";
        for (auto r : report_rows(cmp.ce)) {
            r.pipeline = "ce";
            rows.push_back(r);
        }
        emit_rows(out, rows, o.csv, "");
    } else if (o.study == "proto") {
        require(o.model, "--model", o.study);
        const auto sim = prototype_similarity(load_model(o.model), o.sample, g.seed);
        out << "sampled classes: " << sim.sampled_classes.size() << "\n";
        out << "mean inter-group neighbor similarity: " << sim.mean_inter_neighbor_sim << "\n";
        out << "mean intra-group nearest similarity:  " << sim.mean_intra_nearest_sim << "\n";
        if (!o.csv.empty()) {
            std::ostringstream csv;
            csv << "class,inter,intra\n";
            for (std::size_t i = 0; i < sim.inter.size(); ++i) {
                csv << sim.sampled_classes[i] << "," << sim.inter[i] << "," << sim.intra[i] << "\n";
            }
            write_text(o.csv, csv.str());
        }
    } else {
        require(o.model, "--model", o.study);
        require(o.queries, "--queries", o.study);
        const auto split = confidence_split(load_model(o.model), load_dataset(o.queries), o.threshold, g.threads);
        std::snprintf(buf, sizeof(buf), "correct: %zu queries, mean std %.3f m\nwrong:   %zu queries, mean std %.3f m\n",
                      split.correct, split.mean_std_correct, split.wrong, split.mean_std_wrong);
        out << buf;
    }
}

spdlog::level::level_enum parse_level(const std::string& v) {
    if (v == "error") return spdlog::level::err;
    if (v == "warn") return spdlog::level::warn;
    if (v == "debug") return spdlog::level::debug;
    return spdlog::level::info;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Divide&Classify: geo-cell classification for place recognition", "dnc"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1, 1);
    app.fallthrough();

    Global g;
    app.add_option("--seed", g.seed, "Seed for every random choice of the run");
    app.add_option("--threads", g.threads, "Worker threads, 0 uses all cores");
    app.add_option("--verbosity", g.verbosity, "Log level")->check(CLI::IsMember({"error", "warn", "info", "debug"}));

    SynthOpts synth;
    auto* s_synth = app.add_subcommand("synth", "Generate a synthetic city database and query set");
    s_synth->add_option("--width", synth.city.width, "City width in meters")->check(CLI::PositiveNumber);
    s_synth->add_option("--height", synth.city.height, "City height in meters")->check(CLI::PositiveNumber);
    s_synth->add_option("--spacing", synth.city.spacing, "Database grid spacing in meters")->check(CLI::PositiveNumber);
    s_synth->add_option("--dim", synth.city.dim, "Descriptor dimension")->check(CLI::PositiveNumber);
    s_synth->add_option("--corr-len", synth.city.correlation_length, "Descriptor correlation length L in meters")
        ->check(CLI::PositiveNumber);
    s_synth->add_option("--queries", synth.queries.count, "Number of queries");
    s_synth->add_option("--query-jitter", synth.queries.position_jitter, "Query position jitter in meters");
    s_synth->add_option("--query-noise", synth.queries.noise_sigma, "Query descriptor noise sigma");
    s_synth->add_option("--out", synth.out, "Output directory (database/ and queries/ bundles)")->required();

    std::string pi_dataset;
    PartitionOpts pi_part;
    auto* s_pi = app.add_subcommand("partition-info", "Print the cell and group structure of a dataset");
    s_pi->add_option("--dataset", pi_dataset, "Dataset bundle directory")->required();
    add_partition_options(s_pi, pi_part);

    std::string tr_dataset, tr_out;
    PartitionOpts tr_part;
    TrainOpts tr;
    auto* s_train = app.add_subcommand("train", "Train one classifier head per group");
    s_train->add_option("--dataset", tr_dataset, "Training dataset bundle directory")->required();
    s_train->add_option("--out", tr_out, "Model file to write")->required();
    add_partition_options(s_train, tr_part);
    add_train_options(s_train, tr, true);

    std::string in_model, in_queries, in_csv;
    std::size_t in_topn = 5;
    auto* s_infer = app.add_subcommand("infer", "Predict cells for query descriptors");
    s_infer->add_option("--model", in_model, "Model file")->required();
    s_infer->add_option("--queries", in_queries, "Query bundle directory")->required();
    s_infer->add_option("--topn", in_topn, "Cells listed per query");
    s_infer->add_option("--csv", in_csv, "Write all ranked cells as CSV");

    EvalOpts ev;
    auto* s_eval = app.add_subcommand("eval", "Compute LR@N for one pipeline");
    s_eval->add_option("--model", ev.model, "Model file (classify, mixed)");
    s_eval->add_option("--database", ev.database, "Database bundle (exhaustive, ivf, mixed)");
    s_eval->add_option("--queries", ev.queries, "Query bundle directory")->required();
    s_eval->add_option("--pipeline", ev.pipeline, "Pipeline")
        ->check(CLI::IsMember({"classify", "exhaustive", "ivf", "mixed"}));
    s_eval->add_option("--topn", ev.topn, "Cells searched by the mixed pipeline");
    s_eval->add_option("--nprobe", ev.nprobe, "IVF lists probed");
    s_eval->add_option("--nlist", ev.nlist, "IVF list count");
    s_eval->add_option("--kmeans-iters", ev.kmeans_iters, "Lloyd iterations for IVF training");
    s_eval->add_option("--ns", ev.ns, "N values for LR@N")->delimiter(',');
    s_eval->add_option("--threshold", ev.threshold, "Success radius in meters")->check(CLI::PositiveNumber);
    s_eval->add_option("--csv", ev.csv, "Write rows as CSV");
    s_eval->add_option("--json", ev.json, "Write rows as JSON");

    BenchOpts be;
    auto* s_bench = app.add_subcommand("bench", "Latency and LR@N over database prefixes");
    s_bench->add_option("--model", be.model, "Model file (classify, mixed)");
    s_bench->add_option("--database", be.database, "Database bundle directory")->required();
    s_bench->add_option("--queries", be.queries, "Query bundle directory")->required();
    s_bench->add_option("--sizes", be.sizes, "Database prefix sizes, 0 is the full database")->delimiter(',');
    s_bench->add_option("--pipelines", be.pipelines, "Pipelines to time")
        ->delimiter(',')
        ->check(CLI::IsMember({"classify", "exhaustive", "ivf", "mixed"}));
    s_bench->add_option("--topn", be.topn, "Cells searched by the mixed pipeline");
    s_bench->add_option("--nprobe", be.nprobe, "IVF lists probed");
    s_bench->add_option("--nlist", be.nlist, "IVF list count");
    s_bench->add_option("--kmeans-iters", be.kmeans_iters, "Lloyd iterations for IVF training");
    s_bench->add_option("--repeats", be.repeats, "Timed passes; the fastest is kept");
    s_bench->add_option("--ns", be.ns, "N values for LR@N")->delimiter(',');
    s_bench->add_option("--threshold", be.threshold, "Success radius in meters")->check(CLI::PositiveNumber);
    s_bench->add_option("--csv", be.csv, "Write rows as CSV");
    s_bench->add_option("--json", be.json, "Write rows as JSON");

    AblateOpts ab;
    auto* s_ablate = app.add_subcommand("ablate", "Ablations and prototype/confidence analyses");
    s_ablate->add_option("--study", ab.study, "mn: M x N grid, head: AAMC vs CE, proto: prototype similarity, "
                                              "std: confidence spread")
        ->check(CLI::IsMember({"mn", "head", "proto", "std"}));
    s_ablate->add_option("--model", ab.model, "Trained model (proto, std)");
    s_ablate->add_option("--database", ab.database, "Training database (mn, head)");
    s_ablate->add_option("--queries", ab.queries, "Query bundle (mn, head, std)");
    s_ablate->add_option("--cell-sizes", ab.cell_sizes, "M values for the grid")->delimiter(',');
    s_ablate->add_option("--group-strides", ab.group_strides, "N values for the grid")->delimiter(',');
    add_partition_options(s_ablate, ab.partition);
    add_train_options(s_ablate, ab.train, false);
    s_ablate->add_option("--sample", ab.sample, "Classes sampled by the proto study");
    s_ablate->add_option("--threshold", ab.threshold, "Success radius in meters for the std study");
    s_ablate->add_option("--csv", ab.csv, "Write results as CSV");

    // Optional paths have no value by default; say so in --help.
    auto mark_unset = [](CLI::App* a) {
        for (CLI::Option* opt : a->get_options()) {
            if (!opt->get_required() && opt->get_expected_min() > 0 && opt->get_default_str().empty()) {
                opt->default_str("none");
            }
        }
    };
    mark_unset(&app);
    for (CLI::App* sub : app.get_subcommands({})) mark_unset(sub);

    std::vector<const char*> argv{"dnc"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
    auto logger = std::make_shared<spdlog::logger>("dnc", sink);
    logger->set_pattern("[%l] %v");
    logger->set_level(parse_level(g.verbosity));
    const auto previous = spdlog::default_logger();
    spdlog::set_default_logger(logger);

    int status = 0;
    try {
        if (s_synth->parsed()) {
            cmd_synth(synth, g, out);
        } else if (s_pi->parsed()) {
            cmd_partition_info(pi_dataset, pi_part, out);
        } else if (s_train->parsed()) {
            cmd_train(tr_dataset, tr_out, tr_part, tr, g, out);
        } else if (s_infer->parsed()) {
            cmd_infer(in_model, in_queries, in_topn, in_csv, out);
        } else if (s_eval->parsed()) {
            cmd_eval(ev, g, out);
        } else if (s_bench->parsed()) {
            cmd_bench(be, g, out);
        } else if (s_ablate->parsed()) {
            cmd_ablate(ab, g, out);
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        status = 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        status = 1;
    }
    spdlog::set_default_logger(previous);
    return status;
}

}  // namespace dnc::cli
