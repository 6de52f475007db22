#pragma once

#include <cstdint>
#include <utility>
#include <span>
#include <string>
#include <vector>

#include "dnc/dataset.hpp"
#include "dnc/linalg.hpp"

namespace dnc {

struct Neighbor {
    std::uint32_t row = 0;
    float similarity = 0.0f;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Database descriptors with their ids, positions and the cell each row falls
/// in for a given cell size. Descriptors are stored grouped by cell so that
/// the rows of one cell form a contiguous block.
class FlatIndex {
public:
    FlatIndex() = default;
    /// Throws InvalidInput unless every descriptor is unit-norm within 1e-4.
    FlatIndex(const GeoDataset& dataset, double cell_size);

    std::size_t size() const { return ids_.size(); }
    std::size_t dim() const { return descriptors_.cols(); }
    double cell_size() const { return cell_size_; }

    const std::string& id(std::size_t row) const { return ids_[row]; }
    const UtmPoint& utm(std::size_t row) const { return utm_[row]; }
    const CellIndex& cell(std::size_t row) const { return cells_[row]; }
    const float* descriptor(std::size_t row) const { return descriptors_.row(slot_of_row_[row]).data(); }

    /// Rows tagged with `c`, ascending; empty if none.
    std::span<const std::uint32_t> rows_in_cell(const CellIndex& c) const;
    const std::vector<CellIndex>& cells() const { return cell_keys_; }

    /// Storage slots [begin, end) of cell `c`; begin == end if absent.
    std::pair<std::size_t, std::size_t> cell_slots(const CellIndex& c) const;
    /// Position of `c` in cells(), or -1 if no row falls in it.
    std::ptrdiff_t cell_ordinal(const CellIndex& c) const;
    std::pair<std::size_t, std::size_t> ordinal_slots(std::size_t ordinal) const {
        return {cell_offsets_[ordinal], cell_offsets_[ordinal + 1]};
    }
    std::uint32_t row_at_slot(std::size_t slot) const { return row_of_slot_[slot]; }
    const float* slot_descriptor(std::size_t slot) const { return descriptors_.row(slot).data(); }

private:
    double cell_size_ = 0.0;
    Matrix<float> descriptors_;  // in slot order
    std::vector<std::string> ids_;
    std::vector<UtmPoint> utm_;
    std::vector<CellIndex> cells_;
    std::vector<CellIndex> cell_keys_;         // sorted, unique
    std::vector<std::size_t> cell_offsets_;    // cell_keys_.size() + 1 slot offsets
    std::vector<std::uint32_t> row_of_slot_;
    std::vector<std::uint32_t> slot_of_row_;
    // Dense ordinal lookup over the bounding box of cell_keys_, when it is small enough.
    CellIndex grid_min_;
    std::int64_t grid_width_ = 0;
    std::int64_t grid_height_ = 0;
    std::vector<std::int32_t> grid_;
};

/// Exact top-k by inner product, descending; ties go to the lower row.
std::vector<Neighbor> knn_exhaustive(const FlatIndex& index, std::span<const float> query, std::size_t k);

/// Exact top-k over the rows whose cell is in `allowed_cells`.
std::vector<Neighbor> knn_restricted(const FlatIndex& index, std::span<const float> query, std::size_t k,
                                     std::span<const CellIndex> allowed_cells);

/// Top-k over an explicit candidate row list (any order, no duplicates).
std::vector<Neighbor> knn_over_rows(const FlatIndex& index, std::span<const float> query, std::size_t k,
                                    std::span<const std::uint32_t> rows);

/// Inverted-file index with exact scoring inside the probed lists.
struct IvfFlatIndex {
    FlatIndex base;
    Matrix<float> centroids;                          // nlist x d, unit rows
    std::vector<std::vector<std::uint32_t>> lists;    // ascending row ids
    std::size_t default_nprobe = 1;

    std::size_t nlist() const { return centroids.rows(); }
};

/// k-means++ seeding then `kmeans_iters` Lloyd rounds under cosine similarity,
/// centroids renormalized each round. Rows go to their most similar centroid.
IvfFlatIndex build_ivf(FlatIndex base, std::size_t nlist, std::size_t kmeans_iters, std::uint64_t seed);

/// Centroids ordered by similarity to the query; the first nprobe are searched.
std::vector<std::uint32_t> probe_order(const IvfFlatIndex& index, std::span<const float> query);

std::vector<Neighbor> knn_ivf(const IvfFlatIndex& index, std::span<const float> query, std::size_t k,
                              std::size_t nprobe);

}  // namespace dnc
