#include "dnc/geo_partition.hpp"

#include <cmath>
#include <string>

#include "dnc/dataset.hpp"
#include "dnc/errors.hpp"

namespace dnc {

namespace {

void check_cell_size(double cell_size) {
    if (!(cell_size > 0.0) || !std::isfinite(cell_size)) {
        throw InvalidInput("cell size M must be a positive finite number, got " +
                           std::to_string(cell_size));
    }
}

}  // namespace

double distance(const UtmPoint& a, const UtmPoint& b) {
    return std::hypot(a.easting - b.easting, a.northing - b.northing);
}

void PartitionConfig::validate() const {
    check_cell_size(cell_size);
    if (group_stride < 1) {
        throw InvalidInput("group stride N must be >= 1, got " + std::to_string(group_stride));
    }
}

CellIndex cell_of(const UtmPoint& p, double cell_size) {
    check_cell_size(cell_size);
    if (!std::isfinite(p.easting) || !std::isfinite(p.northing)) {
        throw InvalidInput("cell_of: non-finite coordinate");
    }
    return {static_cast<std::int64_t>(std::floor(p.easting / cell_size)),
            static_cast<std::int64_t>(std::floor(p.northing / cell_size))};
}

UtmPoint class2utm(const CellIndex& c, double cell_size) {
    check_cell_size(cell_size);
    return {(static_cast<double>(c.e) + 0.5) * cell_size,
            (static_cast<double>(c.n) + 0.5) * cell_size};
}

GroupIndex group_of(const CellIndex& c, int group_stride) {
    if (group_stride < 1) {
        throw InvalidInput("group_of: N must be >= 1, got " + std::to_string(group_stride));
    }
    auto emod = [group_stride](std::int64_t x) {
        auto r = x % group_stride;
        return static_cast<int>(r < 0 ? r + group_stride : r);
    };
    return {emod(c.e), emod(c.n)};
}

GroupIndex group_from_ordinal(int ordinal, int group_stride) {
    return {ordinal / group_stride, ordinal % group_stride};
}

ClassPartition::ClassPartition(PartitionConfig config, std::vector<CellIndex> classes)
    : config_(config), classes_(std::move(classes)) {
    config_.validate();
    for (std::size_t i = 1; i < classes_.size(); ++i) {
        if (!(classes_[i - 1] < classes_[i])) {
            throw InvalidInput("class list must be strictly increasing in (e, n) order");
        }
    }
    index_classes();
}

void ClassPartition::index_classes() {
    const int groups = config_.num_groups();
    per_group_classes_.assign(groups, {});
    group_of_class_.resize(classes_.size());
    row_in_group_.resize(classes_.size());
    class_lookup_.clear();
    for (std::size_t c = 0; c < classes_.size(); ++c) {
        const GroupIndex g = group_of(classes_[c], config_.group_stride);
        auto& members = per_group_classes_[group_ordinal(g, config_.group_stride)];
        group_of_class_[c] = g;
        row_in_group_[c] = members.size();
        members.push_back(c);
        class_lookup_.emplace(classes_[c], c);
    }
}

std::ptrdiff_t ClassPartition::find_class(const CellIndex& c) const {
    auto it = class_lookup_.find(c);
    return it == class_lookup_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

std::vector<std::size_t> ClassPartition::group_images(int k) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < class_of_image_.size(); ++i) {
        const auto cls = class_of_image_[i];
        if (cls >= 0 && group_ordinal_of_class(static_cast<std::size_t>(cls)) == k) {
            out.push_back(i);
        }
    }
    return out;
}

ClassPartition build_partition(const GeoDataset& dataset, const PartitionConfig& config) {
    config.validate();
    if (dataset.empty()) {
        throw InvalidInput("build_partition: dataset is empty");
    }

    std::vector<CellIndex> image_cells(dataset.size());
    std::map<CellIndex, std::size_t> counts;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        image_cells[i] = cell_of(dataset.utm[i], config.cell_size);
        ++counts[image_cells[i]];
    }

    ClassPartition part;
    part.config_ = config;
    for (const auto& [cell, count] : counts) {
        if (count >= config.min_images_per_class) part.classes_.push_back(cell);
    }
    if (part.classes_.empty()) {
        throw EmptyPartition("build_partition: every cell has fewer than " +
                             std::to_string(config.min_images_per_class) + " images");
    }
    part.index_classes();

    part.class_of_image_.resize(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        part.class_of_image_[i] = part.find_class(image_cells[i]);
    }
    return part;
}

}  // namespace dnc
