#pragma once

#include "dnc/geo_partition.hpp"
#include "dnc/synth_city.hpp"
#include "dnc/train.hpp"

namespace fixtures {

/// A 160 x 160 m city (1024 samples, 64 cells of 20 m) that trains in well
/// under a second.
struct SmallCity {
    dnc::CityParams city;
    dnc::GeoDataset database;
    dnc::GeoDataset queries;

    explicit SmallCity(std::uint64_t seed = 0, std::size_t dim = 16) {
        city.width = city.height = 160;
        city.spacing = 5;
        city.dim = dim;
        city.correlation_length = 40;
        city.seed = seed;
        database = dnc::generate_city(city);
        dnc::QueryParams qp;
        qp.count = 60;
        qp.noise_sigma = 0.05;
        qp.seed = seed + 1000;
        queries = dnc::generate_queries(city, qp);
    }
};

inline dnc::TrainConfig quick_train(std::size_t epochs = 8) {
    dnc::TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.iterations_per_epoch = 100;
    cfg.batch_size = 32;
    cfg.learning_rate = 1e-3;
    return cfg;
}

}  // namespace fixtures
