#pragma once

#include <cstdint>
#include <vector>

#include "dnc/dataset.hpp"

namespace dnc {

struct CityParams {
    double width = 600.0;
    double height = 600.0;
    double spacing = 5.0;
    std::size_t dim = 64;
    double correlation_length = 60.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct QueryParams {
    std::size_t count = 500;
    double position_jitter = 0.0;
    double noise_sigma = 0.05;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Random Fourier feature field f(q)_k = cos(w_k . q + phi_k) with
/// w_k ~ N(0, 1/L^2) per axis and phi_k ~ U[0, 2pi). Nearby locations get
/// similar descriptors; the correlation length L sets how fast that decays.
class WaveField {
public:
    explicit WaveField(const CityParams& params);

    std::size_t dim() const { return phase_.size(); }

    /// Unnormalized field value at p.
    std::vector<double> raw(const UtmPoint& p) const;

    /// normalize(f(p)) as stored in datasets.
    std::vector<float> descriptor(const UtmPoint& p) const;

private:
    std::vector<double> freq_e_;
    std::vector<double> freq_n_;
    std::vector<double> phase_;
};

/// Database samples on the grid {0, spacing, 2 spacing, ...} restricted to
/// [0, width) x [0, height), easting-major.
GeoDataset generate_city(const CityParams& params);

/// Queries at uniform positions over the city extent; ids are "q000000"...
GeoDataset generate_queries(const CityParams& city, const QueryParams& params);

}  // namespace dnc
