#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dnc/geo_partition.hpp"
#include "dnc/linalg.hpp"

namespace dnc {

enum class HeadKind { aamc, ce };

std::string_view to_string(HeadKind kind);
HeadKind parse_head_kind(std::string_view name);

/// One classifier per group. For AAMC heads `weights` holds unit-norm class
/// prototypes and `bias` is empty; CE heads carry a bias per class.
struct ClassifierHead {
    Matrix<float> weights;
    std::vector<float> bias;

    friend bool operator==(const ClassifierHead&, const ClassifierHead&) = default;
};

/// Shared projection followed by one head per group, in flat group order.
struct DncModel {
    ClassPartition partition;
    HeadKind kind = HeadKind::aamc;
    double scale = 30.0;   // s
    double margin = 0.4;   // m, radians
    Matrix<float> projection;  // d x d_in
    std::vector<ClassifierHead> heads;

    std::size_t input_dim() const { return projection.cols(); }
    std::size_t embed_dim() const { return projection.rows(); }

    /// Checks head count, head shapes and prototype norms.
    void validate() const;
};

/// Identity projection and seeded random unit prototypes (AAMC) or
/// uniform(+-1/sqrt(d)) weights and biases (CE).
DncModel init_model(const ClassPartition& partition, HeadKind kind, std::size_t input_dim,
                    std::size_t embed_dim, double scale, double margin, std::uint64_t seed);

/// normalize(P raw). Falls back to the first basis vector when ||P raw|| < 1e-12.
std::vector<float> embed(const DncModel& model, std::span<const float> raw);

// Model file: a first line "DNCMODEL <version> <offset>" where offset is the
// byte position of the payload, then a JSON header, then little-endian f32
// blocks: P, then each head's weights (and bias for CE) in group order.
void save_model(const DncModel& model, const std::filesystem::path& path);
DncModel load_model(const std::filesystem::path& path);

}  // namespace dnc
