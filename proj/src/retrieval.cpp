#include "dnc/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dnc/errors.hpp"

namespace dnc {

namespace {

struct Better {
    bool operator()(const Neighbor& a, const Neighbor& b) const {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.row < b.row;
    }
};

void check_query(const FlatIndex& index, std::span<const float> query) {
    if (query.size() != index.dim() && index.size() > 0) {
        throw InvalidInput("query has dim " + std::to_string(query.size()) + ", index has " +
                           std::to_string(index.dim()));
    }
}

// Keeps the k best neighbors seen so far; the worst kept one sits at the heap front.
class TopK {
public:
    explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k); }

    void push(std::uint32_t row, float similarity) {
        const Neighbor n{row, similarity};
        if (heap_.size() < k_) {
            heap_.push_back(n);
            std::push_heap(heap_.begin(), heap_.end(), Better{});
            return;
        }
        if (similarity < heap_.front().similarity || !Better{}(n, heap_.front())) return;
        std::pop_heap(heap_.begin(), heap_.end(), Better{});
        heap_.back() = n;
        std::push_heap(heap_.begin(), heap_.end(), Better{});
    }

    std::vector<Neighbor> take() {
        std::sort_heap(heap_.begin(), heap_.end(), Better{});
        return std::move(heap_);
    }

private:
    std::size_t k_;
    std::vector<Neighbor> heap_;
};

}  // namespace

FlatIndex::FlatIndex(const GeoDataset& dataset, double cell_size)
    : cell_size_(cell_size), descriptors_(dataset.size(), dataset.dim), ids_(dataset.ids), utm_(dataset.utm) {
    if (dataset.size() > UINT32_MAX) throw InvalidInput("index too large");
    if (!dataset.normalized()) throw InvalidInput("FlatIndex: descriptors must be unit-norm");
    const std::size_t n = size();
    cells_.reserve(n);
    for (std::size_t r = 0; r < n; ++r) cells_.push_back(cell_of(utm_[r], cell_size));

    row_of_slot_.resize(n);
    std::iota(row_of_slot_.begin(), row_of_slot_.end(), 0u);
    std::stable_sort(row_of_slot_.begin(), row_of_slot_.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return cells_[a] < cells_[b]; });
    slot_of_row_.resize(n);
    for (std::size_t slot = 0; slot < n; ++slot) {
        const std::uint32_t r = row_of_slot_[slot];
        slot_of_row_[r] = static_cast<std::uint32_t>(slot);
        const auto src = dataset.descriptor(r);
        std::copy(src.begin(), src.end(), descriptors_.row(slot).begin());
        if (cell_keys_.empty() || cell_keys_.back() != cells_[r]) {
            cell_keys_.push_back(cells_[r]);
            cell_offsets_.push_back(slot);
        }
    }
    cell_offsets_.push_back(n);

    if (cell_keys_.empty()) return;
    std::int64_t lo_n = cell_keys_.front().n, hi_n = lo_n;
    for (const auto& c : cell_keys_) {
        lo_n = std::min(lo_n, c.n);
        hi_n = std::max(hi_n, c.n);
    }
    const auto width = static_cast<double>(cell_keys_.back().e - cell_keys_.front().e) + 1.0;
    const auto height = static_cast<double>(hi_n - lo_n) + 1.0;
    if (width * height > 4.0 * static_cast<double>(cell_keys_.size()) + 1024.0) return;
    grid_min_ = {cell_keys_.front().e, lo_n};
    grid_width_ = static_cast<std::int64_t>(width);
    grid_height_ = static_cast<std::int64_t>(height);
    grid_.assign(static_cast<std::size_t>(grid_width_ * grid_height_), -1);
    for (std::size_t i = 0; i < cell_keys_.size(); ++i) {
        const auto& c = cell_keys_[i];
        grid_[static_cast<std::size_t>((c.e - grid_min_.e) * grid_height_ + (c.n - grid_min_.n))] =
            static_cast<std::int32_t>(i);
    }
}

std::ptrdiff_t FlatIndex::cell_ordinal(const CellIndex& c) const {
    if (!grid_.empty()) {
        if (c.e < grid_min_.e || c.n < grid_min_.n || c.e - grid_min_.e >= grid_width_ ||
            c.n - grid_min_.n >= grid_height_) {
            return -1;
        }
        return grid_[static_cast<std::size_t>((c.e - grid_min_.e) * grid_height_ + (c.n - grid_min_.n))];
    }
    const auto it = std::lower_bound(cell_keys_.begin(), cell_keys_.end(), c);
    if (it == cell_keys_.end() || *it != c) return -1;
    return it - cell_keys_.begin();
}

std::pair<std::size_t, std::size_t> FlatIndex::cell_slots(const CellIndex& c) const {
    const std::ptrdiff_t i = cell_ordinal(c);
    if (i < 0) return {0, 0};
    return ordinal_slots(static_cast<std::size_t>(i));
}

std::span<const std::uint32_t> FlatIndex::rows_in_cell(const CellIndex& c) const {
    const auto [begin, end] = cell_slots(c);
    return std::span<const std::uint32_t>(row_of_slot_).subspan(begin, end - begin);
}

std::vector<Neighbor> knn_exhaustive(const FlatIndex& index, std::span<const float> query, std::size_t k) {
    if (k == 0) throw InvalidInput("knn: k must be >= 1");
    check_query(index, query);
    TopK top(std::min(k, index.size()));
    for (std::size_t slot = 0; slot < index.size(); ++slot) {
        top.push(index.row_at_slot(slot), dot_fast(index.slot_descriptor(slot), query.data(), query.size()));
    }
    return top.take();
}

std::vector<Neighbor> knn_over_rows(const FlatIndex& index, std::span<const float> query, std::size_t k,
                                    std::span<const std::uint32_t> rows) {
    if (k == 0) throw InvalidInput("knn: k must be >= 1");
    check_query(index, query);
    TopK top(std::min(k, rows.size()));
    for (std::uint32_t r : rows) top.push(r, dot_fast(index.descriptor(r), query.data(), query.size()));
    return top.take();
}

std::vector<Neighbor> knn_restricted(const FlatIndex& index, std::span<const float> query, std::size_t k,
                                     std::span<const CellIndex> allowed_cells) {
    if (allowed_cells.empty()) throw InvalidInput("knn_restricted: allowed cell set is empty");
    if (k == 0) throw InvalidInput("knn: k must be >= 1");
    check_query(index, query);
    std::vector<std::size_t> ordinals;
    ordinals.reserve(allowed_cells.size());
    for (const auto& c : allowed_cells) {
        const std::ptrdiff_t i = index.cell_ordinal(c);
        if (i >= 0) ordinals.push_back(static_cast<std::size_t>(i));
    }
    std::sort(ordinals.begin(), ordinals.end());
    ordinals.erase(std::unique(ordinals.begin(), ordinals.end()), ordinals.end());
    std::size_t total = 0;
    for (std::size_t i : ordinals) {
        const auto [begin, end] = index.ordinal_slots(i);
        total += end - begin;
    }
    TopK top(std::min(k, total));
    for (std::size_t i : ordinals) {
        const auto [begin, end] = index.ordinal_slots(i);
        for (std::size_t slot = begin; slot < end; ++slot) {
            top.push(index.row_at_slot(slot), dot_fast(index.slot_descriptor(slot), query.data(), query.size()));
        }
    }
    return top.take();
}

IvfFlatIndex build_ivf(FlatIndex base, std::size_t nlist, std::size_t kmeans_iters, std::uint64_t seed) {
    const std::size_t n = base.size();
    const std::size_t d = base.dim();
    if (nlist < 1) throw InvalidInput("build_ivf: nlist must be >= 1");
    if (nlist > n) throw InvalidInput("build_ivf: nlist exceeds the number of rows");

    IvfFlatIndex ivf;
    ivf.centroids = Matrix<float>(nlist, d);
    std::mt19937_64 rng(seed);

    // k-means++ seeding with squared chord distance 2 - 2 cos.
    std::vector<double> best_sim(n, -2.0);
    std::vector<char> chosen(n, 0);
    auto adopt = [&](std::size_t c, std::size_t row) {
        chosen[row] = 1;
        std::copy(base.descriptor(row), base.descriptor(row) + d, ivf.centroids.row(c).data());
        for (std::size_t r = 0; r < n; ++r) {
            best_sim[r] = std::max(best_sim[r], static_cast<double>(dot_fast(base.descriptor(r),
                                                                              base.descriptor(row), d)));
        }
    };
    adopt(0, std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t c = 1; c < nlist; ++c) {
        double total = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            if (!chosen[r]) total += std::max(0.0, 2.0 - 2.0 * best_sim[r]);
        }
        std::size_t pick = n;
        if (total > 0.0) {
            const double target = unit(rng) * total;
            double acc = 0.0;
            for (std::size_t r = 0; r < n; ++r) {
                if (chosen[r]) continue;
                acc += std::max(0.0, 2.0 - 2.0 * best_sim[r]);
                pick = r;
                if (acc > target) break;
            }
        } else {
            // Remaining rows coincide with chosen centroids.
            pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), 0) - chosen.begin());
        }
        adopt(c, pick);
    }

    std::vector<std::uint32_t> assign(n);
    auto assign_rows = [&] {
        for (std::size_t r = 0; r < n; ++r) {
            std::uint32_t best = 0;
            float best_s = -INFINITY;
            for (std::size_t c = 0; c < nlist; ++c) {
                const float s = dot_fast(base.descriptor(r), ivf.centroids.row(c).data(), d);
                if (s > best_s) {
                    best_s = s;
                    best = static_cast<std::uint32_t>(c);
                }
            }
            assign[r] = best;
        }
    };

    std::vector<double> sums(nlist * d);
    for (std::size_t it = 0; it < kmeans_iters; ++it) {
        assign_rows();
        std::fill(sums.begin(), sums.end(), 0.0);
        std::vector<std::size_t> counts(nlist, 0);
        for (std::size_t r = 0; r < n; ++r) {
            double* s = sums.data() + assign[r] * d;
            const float* x = base.descriptor(r);
            for (std::size_t j = 0; j < d; ++j) s[j] += x[j];
            ++counts[assign[r]];
        }
        for (std::size_t c = 0; c < nlist; ++c) {
            if (counts[c] == 0) continue;
            std::span<double> s(sums.data() + c * d, d);
            if (normalize_inplace<double>(s) <= 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) ivf.centroids(c, j) = static_cast<float>(s[j]);
        }
    }
    assign_rows();

    ivf.lists.assign(nlist, {});
    for (std::size_t r = 0; r < n; ++r) ivf.lists[assign[r]].push_back(static_cast<std::uint32_t>(r));
    ivf.base = std::move(base);
    return ivf;
}

std::vector<std::uint32_t> probe_order(const IvfFlatIndex& index, std::span<const float> query) {
    check_query(index.base, query);
    std::vector<Neighbor> sims(index.nlist());
    for (std::size_t c = 0; c < index.nlist(); ++c) {
        sims[c] = {static_cast<std::uint32_t>(c), dot_fast(index.centroids.row(c).data(), query.data(), query.size())};
    }
    std::sort(sims.begin(), sims.end(), Better{});
    std::vector<std::uint32_t> order;
    order.reserve(sims.size());
    for (const auto& s : sims) order.push_back(s.row);
    return order;
}

std::vector<Neighbor> knn_ivf(const IvfFlatIndex& index, std::span<const float> query, std::size_t k,
                              std::size_t nprobe) {
    if (nprobe < 1 || nprobe > index.nlist()) {
        throw InvalidInput("knn_ivf: nprobe must be in [1, nlist], got " + std::to_string(nprobe));
    }
    const auto order = probe_order(index, query);
    std::vector<std::uint32_t> rows;
    for (std::size_t p = 0; p < nprobe; ++p) {
        const auto& list = index.lists[order[p]];
        rows.insert(rows.end(), list.begin(), list.end());
    }
    return knn_over_rows(index.base, query, k, rows);
}

}  // namespace dnc
