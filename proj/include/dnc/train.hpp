#pragma once

#include <cstdint>
#include <vector>

#include "dnc/dataset.hpp"
#include "dnc/geo_partition.hpp"
#include "dnc/model.hpp"

namespace dnc {

enum class Sampling { uniform, class_balanced };

struct TrainConfig {
    std::size_t epochs = 40;
    std::size_t iterations_per_epoch = 2000;
    std::size_t batch_size = 64;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double scale = 30.0;
    double margin = 0.4;
    std::size_t embed_dim = 0;  // 0: same as the descriptor dim
    Sampling sampling = Sampling::uniform;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochStats {
    std::size_t epoch = 0;
    int group = 0;
    bool skipped = false;
    double mean_loss = 0.0;
};

/// Round-robin training: epoch t updates head (t mod |G|) and the shared
/// projection with Adam. Deterministic for a fixed config.
DncModel train(const GeoDataset& dataset, const ClassPartition& partition, const TrainConfig& config,
               HeadKind kind, std::vector<EpochStats>* history = nullptr);

}  // namespace dnc
