#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dnc {

struct GeoDataset;

/// Planar UTM position in meters. A single zone is assumed.
struct UtmPoint {
    double easting = 0.0;
    double northing = 0.0;

    friend bool operator==(const UtmPoint&, const UtmPoint&) = default;
};

double distance(const UtmPoint& a, const UtmPoint& b);

/// Integer coordinates of an M x M square cell: (floor(e / M), floor(n / M)).
struct CellIndex {
    std::int64_t e = 0;
    std::int64_t n = 0;

    friend auto operator<=>(const CellIndex&, const CellIndex&) = default;
};

/// Residues of a cell index modulo N. Group (u, v) has flat ordinal u * N + v.
struct GroupIndex {
    int u = 0;
    int v = 0;

    friend auto operator<=>(const GroupIndex&, const GroupIndex&) = default;
};

struct PartitionConfig {
    double cell_size = 20.0;          // M, meters
    int group_stride = 2;             // N
    std::size_t min_images_per_class = 1;

    int num_groups() const { return group_stride * group_stride; }
    void validate() const;
};

CellIndex cell_of(const UtmPoint& p, double cell_size);

/// Center of the cell; the location predicted for a class.
UtmPoint class2utm(const CellIndex& c, double cell_size);

/// Euclidean modulo, so negative indices still land in [0, N).
GroupIndex group_of(const CellIndex& c, int group_stride);

/// Flat ordinal of a group: u * N + v. Heads are stored in this order.
inline int group_ordinal(const GroupIndex& g, int group_stride) { return g.u * group_stride + g.v; }
GroupIndex group_from_ordinal(int ordinal, int group_stride);

/// Cells of a dataset, their group assignment and the image -> class map.
///
/// Class ordinals follow lexicographic (e, n) order of the cells. Within each
/// group the classes keep ascending ordinal order, and a class's position in
/// that list is its row in the group's prototype matrix.
class ClassPartition {
public:
    ClassPartition() = default;

    /// Rebuilds the cell/group structure from a bare class list, as stored in
    /// model files. No image mapping is attached.
    ClassPartition(PartitionConfig config, std::vector<CellIndex> classes);

    const PartitionConfig& config() const { return config_; }
    std::size_t num_classes() const { return classes_.size(); }
    int num_groups() const { return config_.num_groups(); }

    const std::vector<CellIndex>& classes() const { return classes_; }
    const CellIndex& cell(std::size_t cls) const { return classes_.at(cls); }
    GroupIndex group_of_class(std::size_t cls) const { return group_of_class_.at(cls); }
    int group_ordinal_of_class(std::size_t cls) const {
        return group_ordinal(group_of_class_.at(cls), config_.group_stride);
    }
    /// Row of the class inside its group's head.
    std::size_t row_in_group(std::size_t cls) const { return row_in_group_.at(cls); }

    /// Class ordinals of group k (flat ordinal), ascending. Size is S_k.
    const std::vector<std::size_t>& group_classes(int k) const { return per_group_classes_.at(k); }

    /// Class ordinal of a cell, or -1 when the cell is not a class.
    std::ptrdiff_t find_class(const CellIndex& c) const;

    /// Class ordinal per dataset record; -1 for records whose cell was
    /// dropped by min_images_per_class. Empty for partitions loaded from a
    /// model file.
    const std::vector<std::ptrdiff_t>& class_of_image() const { return class_of_image_; }

    /// Dataset record indices belonging to the classes of group k.
    std::vector<std::size_t> group_images(int k) const;

private:
    friend ClassPartition build_partition(const GeoDataset&, const PartitionConfig&);
    void index_classes();

    PartitionConfig config_;
    std::vector<CellIndex> classes_;
    std::vector<GroupIndex> group_of_class_;
    std::vector<std::size_t> row_in_group_;
    std::vector<std::vector<std::size_t>> per_group_classes_;
    std::map<CellIndex, std::size_t> class_lookup_;
    std::vector<std::ptrdiff_t> class_of_image_;
};

ClassPartition build_partition(const GeoDataset& dataset, const PartitionConfig& config);

}  // namespace dnc
