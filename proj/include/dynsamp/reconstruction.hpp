// Inverse-distance-weighted mean interpolation over exact k-nearest measured
// neighbours, with an incrementally updatable neighbour table.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "dynsamp/core.hpp"

namespace dynsamp {

struct Neighbor {
    std::uint32_t cell = 0;
    double d2 = 0.0;  // squared physical distance

    /// Distance first, then row-major index.
    [[nodiscard]] bool before(double other_d2, std::uint32_t other_cell) const {
        return d2 < other_d2 || (d2 == other_d2 && cell < other_cell);
    }
};

inline bool neighbor_less(const Neighbor& a, const Neighbor& b) { return a.before(b.d2, b.cell); }

struct IdwOptions {
    std::size_t neighbors = 10;
    double power = 2.0;
};

inline double idw_weight(double d2, double power) {
    return power == 2.0 ? 1.0 / d2 : 1.0 / std::pow(d2, 0.5 * power);
}

/// For every unmeasured cell, its min(K, k) nearest measured cells in
/// ascending (distance, row-major) order. Measured cells carry empty lists.
class NeighborTable {
public:
    NeighborTable(const MeasurementMask& mask, std::size_t k) : mask_(mask), k_(k) {
        if (k_ == 0) throw ValidationError("neighbour count must be >= 1");
        const std::size_t n = mask_.grid().size();
        entries_.assign(n * k_, Neighbor{});
        counts_.assign(n, 0);
        if (mask_.measured_count() == 0) return;
        if (mask_.measured_count() <= k_) {
            const GridSpec& g = mask_.grid();
            const auto measured = mask_.measured_indices();
            for (std::size_t u = 0; u < n; ++u) {
                if (mask_.measured(u)) continue;
                const Cell cu = g.cell(u);
                for (std::size_t s : measured) {
                    const Cell cs = g.cell(s);
                    insert(u, Neighbor{static_cast<std::uint32_t>(s),
                                       squared_distance(g, cu.row, cu.col, cs.row, cs.col)});
                }
            }
            return;
        }
        for (std::size_t idx = 0; idx < n; ++idx) {
            if (!mask_.measured(idx)) search(idx);
        }
    }

    [[nodiscard]] const MeasurementMask& mask() const { return mask_; }
    [[nodiscard]] const GridSpec& grid() const { return mask_.grid(); }
    [[nodiscard]] std::size_t k() const { return k_; }

    [[nodiscard]] std::span<const Neighbor> neighbors(std::size_t idx) const {
        return {entries_.data() + idx * k_, counts_[idx]};
    }

    /// Mark `idx` measured and merge it into every affected neighbour list.
    /// The result equals a table rebuilt from scratch on the enlarged mask.
    void reveal(std::size_t idx) {
        if (mask_.measured(idx)) throw ValidationError("cell already measured");
        const GridSpec& g = mask_.grid();
        const Cell s = g.cell(idx);
        mask_.set(idx);
        counts_[idx] = 0;
        const auto cell = static_cast<std::uint32_t>(idx);
        for (std::size_t u = 0; u < g.size(); ++u) {
            if (mask_.measured(u)) continue;
            const Cell cu = g.cell(u);
            const double d2 = squared_distance(g, cu.row, cu.col, s.row, s.col);
            insert(u, Neighbor{cell, d2});
        }
    }

private:
    void insert(std::size_t u, Neighbor nb) {
        Neighbor* list = entries_.data() + u * k_;
        std::size_t& count = counts_[u];
        if (count == k_ && !nb.before(list[k_ - 1].d2, list[k_ - 1].cell)) return;
        std::size_t pos = count < k_ ? count : k_ - 1;
        while (pos > 0 && nb.before(list[pos - 1].d2, list[pos - 1].cell)) {
            list[pos] = list[pos - 1];
            --pos;
        }
        list[pos] = nb;
        if (count < k_) ++count;
    }

    // Expanding Chebyshev rings; stops once no cell on the next ring can beat
    // (or tie) the current K-th neighbour.
    void search(std::size_t idx) {
        const GridSpec& g = mask_.grid();
        const Cell c = g.cell(idx);
        const double min_pitch = std::min(g.pixel_width_um, g.pixel_height_um);
        const auto max_ring = static_cast<std::ptrdiff_t>(std::max(g.rows, g.cols));
        const auto r0 = static_cast<std::ptrdiff_t>(c.row);
        const auto c0 = static_cast<std::ptrdiff_t>(c.col);
        const auto rows = static_cast<std::ptrdiff_t>(g.rows);
        const auto cols = static_cast<std::ptrdiff_t>(g.cols);
        auto visit = [&](std::ptrdiff_t r, std::ptrdiff_t cc) {
            if (r < 0 || r >= rows || cc < 0 || cc >= cols) return;
            const auto j = static_cast<std::size_t>(r * cols + cc);
            if (!mask_.measured(j)) return;
            insert(idx, Neighbor{static_cast<std::uint32_t>(j),
                                 squared_distance(g, c.row, c.col, static_cast<std::size_t>(r),
                                                  static_cast<std::size_t>(cc))});
        };
        for (std::ptrdiff_t ring = 1; ring <= max_ring; ++ring) {
            if (counts_[idx] == k_) {
                const double bound = static_cast<double>(ring) * min_pitch;
                if (bound * bound > entries_[idx * k_ + k_ - 1].d2) break;
            }
            for (std::ptrdiff_t dc = -ring; dc <= ring; ++dc) {
                visit(r0 - ring, c0 + dc);
                visit(r0 + ring, c0 + dc);
            }
            for (std::ptrdiff_t dr = -ring + 1; dr <= ring - 1; ++dr) {
                visit(r0 + dr, c0 - ring);
                visit(r0 + dr, c0 + ring);
            }
        }
    }

    MeasurementMask mask_;
    std::size_t k_;
    std::vector<Neighbor> entries_;
    std::vector<std::size_t> counts_;
};

/// Weighted mean over a neighbour list, accumulated in list order.
/// `values` is a dense plane holding the measured value at each neighbour.
inline double idw_value(std::span<const Neighbor> list, std::span<const double> values, double power) {
    double num = 0.0;
    double den = 0.0;
    for (const Neighbor& nb : list) {
        const double w = idw_weight(nb.d2, power);
        num += w * values[nb.cell];
        den += w;
    }
    return num / den;
}

/// Full reconstruction: measured values copied at S, IDW estimates on T.
class Reconstruction {
public:
    Reconstruction(ChannelStack stack, std::shared_ptr<const NeighborTable> table, double power = 2.0)
        : stack_(std::move(stack)), table_(std::move(table)), power_(power) {}

    [[nodiscard]] const ChannelStack& stack() const { return stack_; }
    [[nodiscard]] const Plane& channel(std::size_t z) const { return stack_.channel(z); }
    [[nodiscard]] const MeasurementMask& source_mask() const { return table_->mask(); }
    [[nodiscard]] const NeighborTable& neighbors() const { return *table_; }
    [[nodiscard]] std::shared_ptr<const NeighborTable> neighbor_table() const { return table_; }
    [[nodiscard]] const GridSpec& grid() const { return stack_.grid(); }
    [[nodiscard]] double power() const { return power_; }

private:
    ChannelStack stack_;
    std::shared_ptr<const NeighborTable> table_;
    double power_;
};

/// Dense plane per channel: measured value at S, zero on T.
inline std::vector<Plane> measured_planes(const MeasuredValues& measured) {
    const GridSpec& g = measured.grid();
    std::vector<Plane> out(measured.channel_count(), Plane(g.rows, g.cols));
    for (std::size_t z = 0; z < measured.channel_count(); ++z) {
        const auto vals = measured.channel_values(z);
        for (std::size_t i = 0; i < measured.cells().size(); ++i) out[z][measured.cells()[i]] = vals[i];
    }
    return out;
}

/// Reconstruct using a prebuilt neighbour table for the same mask.
inline Reconstruction reconstruct(const MeasuredValues& measured, std::shared_ptr<const NeighborTable> table,
                                  std::span<const double> labels, double power = 2.0) {
    if (measured.size() == 0) throw ValidationError("reconstruct: no measured cells");
    if (!(table->mask() == measured.mask())) throw ValidationError("reconstruct: neighbour table mask differs");
    const GridSpec& g = measured.grid();
    std::vector<Plane> planes = measured_planes(measured);
    for (auto& plane : planes) {
        const std::vector<double> known(plane.values().begin(), plane.values().end());
        for (std::size_t idx = 0; idx < g.size(); ++idx) {
            if (!measured.mask().measured(idx)) plane[idx] = idw_value(table->neighbors(idx), known, power);
        }
    }
    return Reconstruction(ChannelStack(g, std::move(planes), std::vector<double>(labels.begin(), labels.end())),
                          std::move(table), power);
}

inline std::vector<double> default_labels(std::size_t d) {
    std::vector<double> labels(d);
    for (std::size_t z = 0; z < d; ++z) labels[z] = static_cast<double>(z);
    return labels;
}

/// IDW reconstruction from scratch. Labels default to channel indices.
inline Reconstruction reconstruct(const MeasuredValues& measured, const IdwOptions& opts = {},
                                  std::span<const double> labels = {}) {
    if (measured.size() == 0) throw ValidationError("reconstruct: no measured cells");
    auto table = std::make_shared<const NeighborTable>(measured.mask(), opts.neighbors);
    const std::vector<double> fallback = default_labels(measured.channel_count());
    return reconstruct(measured, std::move(table), labels.empty() ? std::span<const double>(fallback) : labels,
                       opts.power);
}

inline Reconstruction reconstruct(const MeasuredValues& measured, std::size_t neighbors) {
    return reconstruct(measured, IdwOptions{neighbors, 2.0});
}

}  // namespace dynsamp
