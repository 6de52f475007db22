#include "dnc/synth_city.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>

#include "dnc/errors.hpp"

namespace dnc {

namespace {

std::vector<float> normalize_to_float(const std::vector<double>& v) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    const double norm = std::sqrt(sq);
    std::vector<float> out(v.size());
    if (norm < 1e-12) {
        out[0] = 1.0f;
        return out;
    }
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / norm);
    return out;
}

std::string make_id(const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%06zu", prefix, i);
    return buf;
}

std::size_t grid_steps(double extent, double spacing) {
    std::size_t n = 0;
    while (static_cast<double>(n) * spacing < extent) ++n;
    return n;
}

}  // namespace

void CityParams::validate() const {
    if (!(width > 0 && height > 0 && spacing > 0 && correlation_length > 0)) {
        throw InvalidInput("city width, height, spacing and correlation length must be positive");
    }
    if (spacing > width || spacing > height) {
        throw InvalidInput("city spacing must not exceed width or height");
    }
    if (dim < 2) throw InvalidInput("descriptor dim must be >= 2, got " + std::to_string(dim));
}

void QueryParams::validate() const {
    if (!(position_jitter >= 0) || !(noise_sigma >= 0)) {
        throw InvalidInput("query jitter and noise sigma must be non-negative");
    }
}

WaveField::WaveField(const CityParams& params) {
    params.validate();
    std::mt19937_64 rng(params.seed);
    std::normal_distribution<double> freq(0.0, 1.0 / params.correlation_length);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    freq_e_.resize(params.dim);
    freq_n_.resize(params.dim);
    phase_.resize(params.dim);
    for (std::size_t k = 0; k < params.dim; ++k) {
        freq_e_[k] = freq(rng);
        freq_n_[k] = freq(rng);
        phase_[k] = phase(rng);
    }
}

std::vector<double> WaveField::raw(const UtmPoint& p) const {
    std::vector<double> f(dim());
    for (std::size_t k = 0; k < f.size(); ++k) {
        f[k] = std::cos(freq_e_[k] * p.easting + freq_n_[k] * p.northing + phase_[k]);
    }
    return f;
}

std::vector<float> WaveField::descriptor(const UtmPoint& p) const {
    return normalize_to_float(raw(p));
}

GeoDataset generate_city(const CityParams& params) {
    const WaveField field(params);
    GeoDataset ds;
    ds.dim = params.dim;
    const std::size_t ne = grid_steps(params.width, params.spacing);
    const std::size_t nn = grid_steps(params.height, params.spacing);
    ds.ids.reserve(ne * nn);
    ds.utm.reserve(ne * nn);
    ds.descriptors.reserve(ne * nn * params.dim);
    for (std::size_t i = 0; i < ne; ++i) {
        for (std::size_t j = 0; j < nn; ++j) {
            const UtmPoint p{static_cast<double>(i) * params.spacing,
                             static_cast<double>(j) * params.spacing};
            ds.add(make_id("db", ds.size()), p, field.descriptor(p));
        }
    }
    return ds;
}

GeoDataset generate_queries(const CityParams& city, const QueryParams& params) {
    params.validate();
    const WaveField field(city);
    std::mt19937_64 rng(params.seed);
    std::uniform_real_distribution<double> along_e(0.0, city.width);
    std::uniform_real_distribution<double> along_n(0.0, city.height);
    std::normal_distribution<double> jitter(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);

    GeoDataset ds;
    ds.dim = city.dim;
    for (std::size_t q = 0; q < params.count; ++q) {
        const UtmPoint gt{along_e(rng), along_n(rng)};
        UtmPoint seen = gt;
        if (params.position_jitter > 0) {
            seen.easting += params.position_jitter * jitter(rng);
            seen.northing += params.position_jitter * jitter(rng);
        }
        std::vector<double> f = field.raw(seen);
        if (params.noise_sigma > 0) {
            for (double& x : f) x += params.noise_sigma * noise(rng);
        }
        ds.add(make_id("q", q), gt, normalize_to_float(f));
    }
    return ds;
}

}  // namespace dnc
