#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dnc/dataset.hpp"
#include "dnc/model.hpp"
#include "dnc/retrieval.hpp"
#include "dnc/train.hpp"

namespace dnc {

inline constexpr double kDefaultThreshold = 25.0;

struct QueryOutcome {
    UtmPoint gt;
    std::vector<UtmPoint> predicted;
    std::vector<bool> correct_at;  // parallel to EvalReport::ns

    friend bool operator==(const QueryOutcome&, const QueryOutcome&) = default;
};

/// Mean per-query milliseconds of each stage.
struct StageTimings {
    double classify_ms = 0.0;
    double desc_ms = 0.0;
    double knn_ms = 0.0;

    double total_ms() const { return classify_ms + desc_ms + knn_ms; }
};

struct EvalReport {
    std::string pipeline;
    std::size_t db_size = 0;
    unsigned threads = 1;
    double threshold = kDefaultThreshold;
    std::vector<std::size_t> ns;
    std::map<std::size_t, double> lr_at;  // N -> percentage
    std::vector<QueryOutcome> queries;
    StageTimings timing;

    double lr(std::size_t n) const { return lr_at.at(n); }

    /// Equality of everything except timings.
    bool same_results(const EvalReport& other) const;
};

/// LR@N: percentage of queries with at least one of their first N predicted
/// points within `threshold` meters (inclusive) of the ground truth.
EvalReport lr_at_n(std::span<const std::vector<UtmPoint>> predictions, std::span<const UtmPoint> gts,
                   std::span<const std::size_t> ns, double threshold = kDefaultThreshold);

enum class PipelineKind { exhaustive, ivf, classify, mixed };

std::string_view to_string(PipelineKind kind);
PipelineKind parse_pipeline(std::string_view name);

struct PipelineInputs {
    const DncModel* model = nullptr;
    const FlatIndex* flat = nullptr;
    const IvfFlatIndex* ivf = nullptr;
};

struct PipelineParams {
    std::vector<std::size_t> ns{1, 5, 10, 20};
    std::size_t topn = 25;  // cells kept by the mixed pipeline
    std::size_t nprobe = 1;
    double threshold = kDefaultThreshold;
    unsigned threads = 1;
};

/// Runs one pipeline over all queries in three timed batch stages: query
/// descriptor handling, classification and kNN.
EvalReport run_pipeline(PipelineKind kind, const PipelineInputs& inputs, const GeoDataset& queries,
                        const PipelineParams& params);

struct MnCell {
    double cell_size = 0.0;
    int group_stride = 0;
    double lr1 = 0.0;
};

/// Trains and evaluates one classifier per (M, N) with the same budget/seed.
std::vector<MnCell> ablate_mn(const GeoDataset& database, const GeoDataset& queries,
                              std::span<const double> cell_sizes, std::span<const int> group_strides,
                              const TrainConfig& config, unsigned threads = 1);

struct HeadComparison {
    EvalReport aamc;
    EvalReport ce;
};

HeadComparison ablate_head(const GeoDataset& database, const GeoDataset& queries,
                           const PartitionConfig& partition, const TrainConfig& config, unsigned threads = 1);

struct PrototypeSimilarity {
    double mean_inter_neighbor_sim = 0.0;
    double mean_intra_nearest_sim = 0.0;
    std::vector<std::size_t> sampled_classes;
    std::vector<double> inter;
    std::vector<double> intra;
};

/// For sampled classes: similarity of the prototype to the nearest cell's
/// prototype in another group (inter) and in the same group (intra).
PrototypeSimilarity prototype_similarity(const DncModel& model, std::size_t sample_size, std::uint64_t seed);

struct ConfidenceSplit {
    double mean_std_correct = 0.0;
    double mean_std_wrong = 0.0;
    std::size_t correct = 0;
    std::size_t wrong = 0;
};

/// Mean confidence_std over queries whose top-1 cell center is within
/// `threshold` of the ground truth, and over the rest. A side with no
/// queries reports NaN.
ConfidenceSplit confidence_split(const DncModel& model, const GeoDataset& queries,
                                 double threshold = kDefaultThreshold, unsigned threads = 1);

struct BenchRow {
    std::string pipeline;
    std::size_t db_size = 0;
    std::size_t n = 0;
    double lr = 0.0;
    double ms_classify = 0.0;
    double ms_desc = 0.0;
    double ms_knn = 0.0;

    double ms_per_query() const { return ms_classify + ms_desc + ms_knn; }
};

struct BenchConfig {
    std::vector<std::size_t> db_sizes;
    std::vector<PipelineKind> pipelines;
    PipelineParams params;
    std::size_t nlist = 64;
    std::size_t kmeans_iters = 20;
    std::size_t repeats = 3;  // timing is the fastest of this many passes
    std::uint64_t seed = 0;
};

/// Database prefixes after a seeded shuffle; one row per (pipeline, size, N).
std::vector<BenchRow> benchmark_scaling(const GeoDataset& database, const GeoDataset& queries,
                                        const DncModel* model, const BenchConfig& config);

inline constexpr char kCsvHeader[] = "pipeline,db_size,n,lr,ms_classify,ms_desc,ms_knn";

void write_csv(std::ostream& out, std::span<const BenchRow> rows);
std::vector<BenchRow> report_rows(const EvalReport& report);
nlohmann::json to_json(std::span<const BenchRow> rows);
void write_table(std::ostream& out, std::span<const BenchRow> rows);

}  // namespace dnc
