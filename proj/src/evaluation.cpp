#include "dnc/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

#include "dnc/errors.hpp"
#include "dnc/inference.hpp"
#include "dnc/parallel.hpp"

namespace dnc {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::vector<float> normalized_copy(std::span<const float> v) {
    std::vector<float> out(v.begin(), v.end());
    normalize_inplace<float>(out);
    return out;
}

double classify_lr1(const GeoDataset& database, const GeoDataset& queries, const PartitionConfig& pc,
                    const TrainConfig& config, HeadKind kind, EvalReport* full) {
    const auto partition = build_partition(database, pc);
    const auto model = train(database, partition, config, kind);
    PipelineParams params;
    const auto report = run_pipeline(PipelineKind::classify, {&model, nullptr, nullptr}, queries, params);
    if (full) *full = report;
    return report.lr(1);
}

}  // namespace

bool EvalReport::same_results(const EvalReport& other) const {
    return ns == other.ns && lr_at == other.lr_at && threshold == other.threshold && queries == other.queries;
}

EvalReport lr_at_n(std::span<const std::vector<UtmPoint>> predictions, std::span<const UtmPoint> gts,
                   std::span<const std::size_t> ns, double threshold) {
    if (predictions.size() != gts.size()) throw InvalidInput("lr_at_n: predictions and ground truths differ in length");
    if (gts.empty()) throw UndefinedMetric("lr_at_n: empty query set");
    if (!(threshold > 0)) throw InvalidInput("lr_at_n: threshold must be positive");
    if (ns.empty()) throw InvalidInput("lr_at_n: no N values requested");
    for (std::size_t n : ns) {
        if (n == 0) throw InvalidInput("lr_at_n: N must be >= 1");
    }

    EvalReport report;
    report.threshold = threshold;
    report.ns.assign(ns.begin(), ns.end());
    std::vector<std::size_t> hits(ns.size(), 0);
    for (std::size_t q = 0; q < gts.size(); ++q) {
        QueryOutcome outcome{gts[q], predictions[q], {}};
        // Rank of the first prediction inside the radius.
        std::size_t first_hit = std::numeric_limits<std::size_t>::max();
        for (std::size_t r = 0; r < predictions[q].size(); ++r) {
            if (distance(predictions[q][r], gts[q]) <= threshold) {
                first_hit = r;
                break;
            }
        }
        for (std::size_t i = 0; i < ns.size(); ++i) {
            const bool ok = first_hit < ns[i];
            outcome.correct_at.push_back(ok);
            hits[i] += ok ? 1 : 0;
        }
        report.queries.push_back(std::move(outcome));
    }
    for (std::size_t i = 0; i < ns.size(); ++i) {
        report.lr_at[ns[i]] = 100.0 * static_cast<double>(hits[i]) / static_cast<double>(gts.size());
    }
    return report;
}

std::string_view to_string(PipelineKind kind) {
    switch (kind) {
        case PipelineKind::exhaustive: return "exhaustive";
        case PipelineKind::ivf: return "ivf";
        case PipelineKind::classify: return "classify";
        case PipelineKind::mixed: return "mixed";
    }
    return "?";
}

PipelineKind parse_pipeline(std::string_view name) {
    for (auto k : {PipelineKind::exhaustive, PipelineKind::ivf, PipelineKind::classify, PipelineKind::mixed}) {
        if (to_string(k) == name) return k;
    }
    throw InvalidInput("unknown pipeline '" + std::string(name) + "'");
}

EvalReport run_pipeline(PipelineKind kind, const PipelineInputs& in, const GeoDataset& queries,
                        const PipelineParams& params) {
    const bool uses_model = kind == PipelineKind::classify || kind == PipelineKind::mixed;
    if (uses_model && !in.model) throw ConfigError(std::string(to_string(kind)) + " pipeline needs a model");
    if ((kind == PipelineKind::exhaustive || kind == PipelineKind::mixed) && !in.flat) {
        throw ConfigError(std::string(to_string(kind)) + " pipeline needs a database index");
    }
    if (kind == PipelineKind::ivf && !in.ivf) throw ConfigError("ivf pipeline needs an IVF index");
    if (params.ns.empty()) throw InvalidInput("run_pipeline: no N values requested");
    if (kind == PipelineKind::mixed && params.topn == 0) throw InvalidInput("topn_cells: n must be >= 1");
    if (queries.empty()) throw UndefinedMetric("run_pipeline: empty query set");

    const std::size_t count = queries.size();
    const std::size_t max_n = *std::max_element(params.ns.begin(), params.ns.end());
    const unsigned threads = resolve_threads(params.threads);

    // Stage 1: query descriptors.
    std::vector<std::vector<float>> embedded(uses_model ? count : 0);
    std::vector<std::vector<float>> retrieval_q(uses_model && kind == PipelineKind::classify ? 0 : count);
    auto t0 = Clock::now();
    parallel_for(count, threads, [&](std::size_t q) {
        if (uses_model) embedded[q] = embed(*in.model, queries.descriptor(q));
        if (!retrieval_q.empty()) retrieval_q[q] = normalized_copy(queries.descriptor(q));
    });
    const double desc_ms = elapsed_ms(t0);

    // Stage 2: classification.
    std::vector<std::vector<Prediction>> cells(uses_model ? count : 0);
    t0 = Clock::now();
    if (uses_model) {
        const std::size_t keep = kind == PipelineKind::classify ? max_n : params.topn;
        parallel_for(count, threads, [&](std::size_t q) {
            cells[q] = top_predictions_embedded(*in.model, embedded[q], keep);
        });
    }
    const double classify_ms = elapsed_ms(t0);

    // Stage 3: kNN.
    std::vector<std::vector<Neighbor>> neighbors(kind == PipelineKind::classify ? 0 : count);
    t0 = Clock::now();
    parallel_for(neighbors.size(), threads, [&](std::size_t q) {
        switch (kind) {
            case PipelineKind::exhaustive:
                neighbors[q] = knn_exhaustive(*in.flat, retrieval_q[q], max_n);
                break;
            case PipelineKind::ivf:
                neighbors[q] = knn_ivf(*in.ivf, retrieval_q[q], max_n, params.nprobe);
                break;
            case PipelineKind::mixed: {
                std::vector<CellIndex> allowed;
                allowed.reserve(cells[q].size());
                for (const auto& p : cells[q]) allowed.push_back(p.cell);
                neighbors[q] = knn_restricted(*in.flat, retrieval_q[q], max_n, allowed);
                break;
            }
            case PipelineKind::classify:
                break;
        }
    });
    const double knn_ms = elapsed_ms(t0);

    std::vector<std::vector<UtmPoint>> predicted(count);
    const FlatIndex* base = kind == PipelineKind::ivf ? &in.ivf->base : in.flat;
    for (std::size_t q = 0; q < count; ++q) {
        if (kind == PipelineKind::classify) {
            for (const auto& p : cells[q]) {
                predicted[q].push_back(class2utm(p.cell, in.model->partition.config().cell_size));
            }
        } else {
            for (const auto& nb : neighbors[q]) predicted[q].push_back(base->utm(nb.row));
        }
    }

    EvalReport report = lr_at_n(predicted, queries.utm, params.ns, params.threshold);
    report.pipeline = std::string(to_string(kind));
    report.db_size = base ? base->size() : 0;
    report.threads = threads;
    const double per = 1.0 / static_cast<double>(count);
    report.timing = {classify_ms * per, desc_ms * per, knn_ms * per};
    return report;
}

std::vector<MnCell> ablate_mn(const GeoDataset& database, const GeoDataset& queries,
                              std::span<const double> cell_sizes, std::span<const int> group_strides,
                              const TrainConfig& config, unsigned threads) {
    std::vector<MnCell> grid;
    for (double m : cell_sizes) {
        for (int n : group_strides) grid.push_back({m, n, 0.0});
    }
    parallel_for(grid.size(), threads, [&](std::size_t i) {
        PartitionConfig pc;
        pc.cell_size = grid[i].cell_size;
        pc.group_stride = grid[i].group_stride;
        grid[i].lr1 = classify_lr1(database, queries, pc, config, HeadKind::aamc, nullptr);
    });
    return grid;
}

HeadComparison ablate_head(const GeoDataset& database, const GeoDataset& queries,
                           const PartitionConfig& partition, const TrainConfig& config, unsigned threads) {
    HeadComparison out;
    parallel_for(2, threads, [&](std::size_t i) {
        const HeadKind kind = i == 0 ? HeadKind::aamc : HeadKind::ce;
        classify_lr1(database, queries, partition, config, kind, i == 0 ? &out.aamc : &out.ce);
    });
    return out;
}

PrototypeSimilarity prototype_similarity(const DncModel& model, std::size_t sample_size, std::uint64_t seed) {
    const auto& part = model.partition;
    if (part.num_groups() < 2) throw UndefinedMetric("prototype_similarity: needs at least 2 groups");
    const std::size_t classes = part.num_classes();
    const double m = part.config().cell_size;

    std::vector<std::size_t> order(classes);
    std::iota(order.begin(), order.end(), 0);
    if (sample_size < classes) {
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
        order.resize(sample_size);
    }

    auto prototype = [&](std::size_t cls) {
        return model.heads[part.group_ordinal_of_class(cls)].weights.row(part.row_in_group(cls));
    };
    auto cosine = [](std::span<const float> a, std::span<const float> b) {
        double ab = 0, aa = 0, bb = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            ab += static_cast<double>(a[i]) * b[i];
            aa += static_cast<double>(a[i]) * a[i];
            bb += static_cast<double>(b[i]) * b[i];
        }
        return ab / std::sqrt(aa * bb);
    };

    PrototypeSimilarity out;
    for (std::size_t cls : order) {
        const UtmPoint here = class2utm(part.cell(cls), m);
        const int g = part.group_ordinal_of_class(cls);
        std::ptrdiff_t inter = -1, intra = -1;
        double inter_d = INFINITY, intra_d = INFINITY;
        for (std::size_t other = 0; other < classes; ++other) {
            if (other == cls) continue;
            const double dist = distance(here, class2utm(part.cell(other), m));
            if (part.group_ordinal_of_class(other) == g) {
                if (dist < intra_d) intra_d = dist, intra = static_cast<std::ptrdiff_t>(other);
            } else if (dist < inter_d) {
                inter_d = dist, inter = static_cast<std::ptrdiff_t>(other);
            }
        }
        if (inter < 0 || intra < 0) continue;
        out.sampled_classes.push_back(cls);
        out.inter.push_back(cosine(prototype(cls), prototype(static_cast<std::size_t>(inter))));
        out.intra.push_back(cosine(prototype(cls), prototype(static_cast<std::size_t>(intra))));
    }
    if (out.inter.empty()) throw UndefinedMetric("prototype_similarity: no class has both kinds of neighbor");
    auto mean = [](const std::vector<double>& v) {
        return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    out.mean_inter_neighbor_sim = mean(out.inter);
    out.mean_intra_nearest_sim = mean(out.intra);
    return out;
}

ConfidenceSplit confidence_split(const DncModel& model, const GeoDataset& queries, double threshold,
                                 unsigned threads) {
    if (queries.empty()) throw UndefinedMetric("confidence_split: empty query set");
    std::vector<double> spread(queries.size());
    std::vector<char> hit(queries.size());
    parallel_for(queries.size(), resolve_threads(threads), [&](std::size_t q) {
        const auto desc = queries.descriptor(q);
        spread[q] = confidence_std(model, desc);
        hit[q] = distance(predict_utm(model, desc), queries.utm[q]) <= threshold;
    });
    ConfidenceSplit out;
    double sum_ok = 0.0, sum_bad = 0.0;
    for (std::size_t q = 0; q < queries.size(); ++q) {
        if (hit[q]) {
            sum_ok += spread[q];
            ++out.correct;
        } else {
            sum_bad += spread[q];
            ++out.wrong;
        }
    }
    out.mean_std_correct = out.correct ? sum_ok / static_cast<double>(out.correct) : NAN;
    out.mean_std_wrong = out.wrong ? sum_bad / static_cast<double>(out.wrong) : NAN;
    return out;
}

std::vector<BenchRow> report_rows(const EvalReport& report) {
    std::vector<BenchRow> rows;
    for (std::size_t n : report.ns) {
        rows.push_back({report.pipeline, report.db_size, n, report.lr(n), report.timing.classify_ms,
                        report.timing.desc_ms, report.timing.knn_ms});
    }
    return rows;
}

std::vector<BenchRow> benchmark_scaling(const GeoDataset& database, const GeoDataset& queries,
                                        const DncModel* model, const BenchConfig& config) {
    std::vector<std::size_t> perm(database.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(config.seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    const double cell_size = model ? model->partition.config().cell_size : 20.0;

    std::vector<BenchRow> rows;
    for (std::size_t size : config.db_sizes) {
        if (size == 0 || size > database.size()) {
            throw InvalidInput("benchmark_scaling: db size " + std::to_string(size) + " outside [1, " +
                               std::to_string(database.size()) + "]");
        }
        const GeoDataset subset = database.subset(std::span(perm).first(size));
        const FlatIndex flat(subset, cell_size);
        std::optional<IvfFlatIndex> ivf;
        for (PipelineKind kind : config.pipelines) {
            if (kind == PipelineKind::ivf && !ivf) {
                ivf = build_ivf(flat, std::min(config.nlist, size), config.kmeans_iters, config.seed);
            }
            PipelineInputs in{model, &flat, ivf ? &*ivf : nullptr};
            EvalReport best = run_pipeline(kind, in, queries, config.params);
            for (std::size_t r = 1; r < config.repeats; ++r) {
                const EvalReport again = run_pipeline(kind, in, queries, config.params);
                best.timing.classify_ms = std::min(best.timing.classify_ms, again.timing.classify_ms);
                best.timing.desc_ms = std::min(best.timing.desc_ms, again.timing.desc_ms);
                best.timing.knn_ms = std::min(best.timing.knn_ms, again.timing.knn_ms);
            }
            best.db_size = size;
            for (auto& row : report_rows(best)) rows.push_back(std::move(row));
        }
    }
    return rows;
}

void write_csv(std::ostream& out, std::span<const BenchRow> rows) {
    out << kCsvHeader << '\n';
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%.4f,%.6f,%.6f,%.6f\n", r.pipeline.c_str(), r.db_size, r.n, r.lr,
                      r.ms_classify, r.ms_desc, r.ms_knn);
        out << buf;
    }
}

nlohmann::json to_json(std::span<const BenchRow> rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
        arr.push_back({{"pipeline", r.pipeline},
                       {"db_size", r.db_size},
                       {"n", r.n},
                       {"lr", r.lr},
                       {"ms_classify", r.ms_classify},
                       {"ms_desc", r.ms_desc},
                       {"ms_knn", r.ms_knn}});
    }
    return arr;
}

void write_table(std::ostream& out, std::span<const BenchRow> rows) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-11s %9s %4s %8s %12s %10s %10s\n", "pipeline", "db_size", "N", "LR@N",
                  "ms_classify", "ms_desc", "ms_knn");
    out << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-11s %9zu %4zu %8.2f %12.5f %10.5f %10.5f\n", r.pipeline.c_str(),
                      r.db_size, r.n, r.lr, r.ms_classify, r.ms_desc, r.ms_knn);
        out << buf;
    }
}

}  // namespace dnc
