#include "dnc/inference.hpp"

#include <algorithm>
#include <cmath>
#include <bit>
#include <cstdint>

#include "dnc/errors.hpp"

namespace dnc {

namespace {

// Calls f(position, class ordinal, confidence) for every class, groups in
// ordinal order and classes in head row order, so position follows Ranked ties.
template <typename F>
void for_each_confidence(const DncModel& model, std::span<const float> x, F&& f) {
    if (x.size() != model.embed_dim()) throw InvalidInput("predict: embedding dim mismatch");
    const auto& part = model.partition;
    const float scale = model.kind == HeadKind::aamc ? static_cast<float>(model.scale) : 1.0f;
    std::vector<float> logits;
    std::size_t position = 0;

    for (int k = 0; k < part.num_groups(); ++k) {
        const auto& members = part.group_classes(k);
        if (members.empty()) continue;
        const auto& head = model.heads[k];
        logits.resize(members.size());
        float top = -INFINITY;
        for (std::size_t r = 0; r < members.size(); ++r) {
            float l = scale * dot_fast(head.weights.row(r).data(), x.data(), x.size());
            if (!head.bias.empty()) l += head.bias[r];
            logits[r] = l;
            top = std::max(top, l);
        }
        double sum = 0.0;
        for (float& l : logits) {
            l = std::exp(l - top);
            sum += l;
        }
        const float inv = static_cast<float>(1.0 / sum);
        for (std::size_t r = 0; r < members.size(); ++r) f(position++, members[r], logits[r] * inv);
    }
}

// Per-class confidence, indexed by class ordinal.
std::vector<float> class_confidences(const DncModel& model, std::span<const float> x) {
    std::vector<float> conf(model.partition.num_classes());
    for_each_confidence(model, x, [&](std::size_t, std::size_t cls, float c) { conf[cls] = c; });
    return conf;
}

// Confidences are non-negative, so their inverted bit patterns sort descending
// as integers; the low half holds the tie-break position.
struct RankKeys {
    std::vector<std::uint64_t> keys;
    std::vector<std::size_t> class_at;

    RankKeys(const DncModel& model, std::span<const float> x)
        : keys(model.partition.num_classes()), class_at(model.partition.num_classes()) {
        for_each_confidence(model, x, [&](std::size_t pos, std::size_t cls, float c) {
            keys[pos] = (std::uint64_t{~std::bit_cast<std::uint32_t>(c)} << 32) | pos;
            class_at[pos] = cls;
        });
    }

    Prediction prediction(const ClassPartition& part, std::uint64_t key) const {
        const std::size_t cls = class_at[key & 0xffffffffu];
        const float c = std::bit_cast<float>(~static_cast<std::uint32_t>(key >> 32));
        return {part.cell(cls), part.group_of_class(cls), cls, c};
    }
};

}  // namespace

PredictionList predict_embedded(const DncModel& model, std::span<const float> x) {
    RankKeys ranked(model, x);
    std::sort(ranked.keys.begin(), ranked.keys.end());
    PredictionList list;
    list.entries.reserve(ranked.keys.size());
    for (std::uint64_t key : ranked.keys) list.entries.push_back(ranked.prediction(model.partition, key));
    return list;
}

std::vector<Prediction> top_predictions_embedded(const DncModel& model, std::span<const float> x,
                                                 std::size_t n) {
    if (n == 0) throw InvalidInput("topn_cells: n must be >= 1");
    RankKeys ranked(model, x);
    auto& keys = ranked.keys;
    n = std::min(n, keys.size());
    const auto mid = keys.begin() + static_cast<std::ptrdiff_t>(n);
    if (n < keys.size()) std::nth_element(keys.begin(), mid, keys.end());
    std::sort(keys.begin(), mid);
    std::vector<Prediction> top;
    top.reserve(n);
    for (auto it = keys.begin(); it != mid; ++it) top.push_back(ranked.prediction(model.partition, *it));
    return top;
}

PredictionList predict(const DncModel& model, std::span<const float> raw) {
    return predict_embedded(model, embed(model, raw));
}

UtmPoint predict_utm(const DncModel& model, std::span<const float> raw) {
    const auto top = top_predictions_embedded(model, embed(model, raw), 1);
    return class2utm(top.front().cell, model.partition.config().cell_size);
}

std::vector<CellIndex> topn_cells(const DncModel& model, std::span<const float> raw, std::size_t n) {
    if (n == 0) throw InvalidInput("topn_cells: n must be >= 1");
    const auto top = top_predictions_embedded(model, embed(model, raw), n);
    std::vector<CellIndex> cells;
    cells.reserve(top.size());
    for (const auto& p : top) cells.push_back(p.cell);
    return cells;
}

double confidence_std(const DncModel& model, std::span<const float> raw) {
    const auto& part = model.partition;
    if (part.num_groups() < 2) {
        throw UndefinedMetric("confidence_std: needs at least 2 groups, model has 1");
    }
    const auto conf = class_confidences(model, embed(model, raw));
    std::vector<UtmPoint> points;
    for (int k = 0; k < part.num_groups(); ++k) {
        const auto& members = part.group_classes(k);
        if (members.empty()) continue;
        std::size_t best = members.front();
        for (std::size_t cls : members) {
            if (conf[cls] > conf[best]) best = cls;
        }
        points.push_back(class2utm(part.cell(best), part.config().cell_size));
    }
    UtmPoint centroid;
    for (const auto& p : points) {
        centroid.easting += p.easting;
        centroid.northing += p.northing;
    }
    centroid.easting /= static_cast<double>(points.size());
    centroid.northing /= static_cast<double>(points.size());
    double sq = 0.0;
    for (const auto& p : points) {
        const double dist = distance(p, centroid);
        sq += dist * dist;
    }
    return std::sqrt(sq / static_cast<double>(points.size()));
}

}  // namespace dnc
