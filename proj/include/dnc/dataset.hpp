#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dnc/geo_partition.hpp"

namespace dnc {

/// Geo-tagged descriptor records stored column-wise. Descriptors are a
/// row-major size() x dim float matrix.
struct GeoDataset {
    std::size_t dim = 0;
    std::vector<std::string> ids;
    std::vector<UtmPoint> utm;
    std::vector<float> descriptors;

    std::size_t size() const { return ids.size(); }
    bool empty() const { return ids.empty(); }

    std::span<const float> descriptor(std::size_t i) const {
        return {descriptors.data() + i * dim, dim};
    }
    std::span<float> descriptor(std::size_t i) { return {descriptors.data() + i * dim, dim}; }

    void add(std::string id, UtmPoint p, std::span<const float> desc);

    /// True when every descriptor has L2 norm within tol of 1.
    bool normalized(double tol = 1e-4) const;

    /// Throws InvalidInput on duplicate ids, ragged storage or non-finite values.
    void validate() const;

    /// Records [0, n) in their stored order.
    GeoDataset prefix(std::size_t n) const;
    GeoDataset subset(std::span<const std::size_t> rows) const;
};

// Bundle layout: <dir>/metadata.csv with header "id,easting,northing" and
// <dir>/descriptors.bin holding the magic "GEODSC01", u32 count, u32 dim and
// count * dim little-endian f32 values.
inline constexpr char kMetadataFile[] = "metadata.csv";
inline constexpr char kDescriptorFile[] = "descriptors.bin";

GeoDataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const GeoDataset& dataset, const std::filesystem::path& dir);

}  // namespace dnc
