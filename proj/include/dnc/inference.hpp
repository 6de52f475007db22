#pragma once

#include <span>
#include <vector>

#include "dnc/model.hpp"

namespace dnc {

struct Prediction {
    CellIndex cell;
    GroupIndex group;
    std::size_t class_ordinal = 0;
    float confidence = 0.0f;
};

/// Every (group, class) pair of the model, sorted by confidence descending;
/// ties go to the lower (group, class ordinal).
struct PredictionList {
    std::vector<Prediction> entries;
};

/// Per-group softmax of s * W_k x (AAMC) or W_k x + b (CE), merged across
/// groups. `x` must already be embedded.
PredictionList predict_embedded(const DncModel& model, std::span<const float> x);

/// The first n entries of predict_embedded without sorting the full list.
std::vector<Prediction> top_predictions_embedded(const DncModel& model, std::span<const float> x,
                                                 std::size_t n);

PredictionList predict(const DncModel& model, std::span<const float> raw);

/// Center of the top-1 cell.
UtmPoint predict_utm(const DncModel& model, std::span<const float> raw);

std::vector<CellIndex> topn_cells(const DncModel& model, std::span<const float> raw, std::size_t n);

/// Root-mean-square distance (meters) of the per-group argmax cell centers
/// to their centroid. Groups without classes do not vote.
double confidence_std(const DncModel& model, std::span<const float> raw);

}  // namespace dnc
