// Six hand-crafted descriptors per unmeasured cell and channel, computed from
// the current reconstruction and its neighbour table.
#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "dynsamp/reconstruction.hpp"

namespace dynsamp {

inline constexpr std::size_t kFeatureCount = 6;

/// Rows follow the row-major order of `cells` (the unmeasured cells).
struct FeatureMatrix {
    std::vector<std::size_t> cells;
    Eigen::MatrixXd values;  // cells.size() x kFeatureCount
};

/// Radius used by the measurement-density feature.
inline double density_radius(const GridSpec& g) { return 2.0 * std::max(g.pixel_width_um, g.pixel_height_um); }

/// Measured cells within `density_radius` of each cell, per unit area.
inline std::vector<double> measurement_density(const MeasurementMask& mask) {
    const GridSpec& g = mask.grid();
    const double r = density_radius(g);
    const double r2 = r * r;
    const double area = std::numbers::pi * r2;
    const auto hr = static_cast<std::ptrdiff_t>(std::ceil(r / g.pixel_height_um));
    const auto hc = static_cast<std::ptrdiff_t>(std::ceil(r / g.pixel_width_um));
    const auto rows = static_cast<std::ptrdiff_t>(g.rows);
    const auto cols = static_cast<std::ptrdiff_t>(g.cols);
    std::vector<double> out(g.size(), 0.0);
    for (std::ptrdiff_t r0 = 0; r0 < rows; ++r0) {
        for (std::ptrdiff_t c0 = 0; c0 < cols; ++c0) {
            std::size_t count = 0;
            for (std::ptrdiff_t r1 = std::max<std::ptrdiff_t>(0, r0 - hr); r1 <= std::min(rows - 1, r0 + hr); ++r1) {
                for (std::ptrdiff_t c1 = std::max<std::ptrdiff_t>(0, c0 - hc); c1 <= std::min(cols - 1, c0 + hc);
                     ++c1) {
                    if (!mask.measured(static_cast<std::size_t>(r1 * cols + c1))) continue;
                    const double d2 = squared_distance(g, static_cast<std::size_t>(r0), static_cast<std::size_t>(c0),
                                                       static_cast<std::size_t>(r1), static_cast<std::size_t>(c1));
                    if (d2 <= r2) ++count;
                }
            }
            out[static_cast<std::size_t>(r0 * cols + c0)] = static_cast<double>(count) / area;
        }
    }
    return out;
}

namespace detail {

// Central difference in physical units; one-sided at the border, zero along
// an axis of length one.
inline double axis_derivative(const Plane& p, std::size_t r, std::size_t c, bool along_rows, double pitch) {
    const std::size_t n = along_rows ? p.rows() : p.cols();
    const std::size_t i = along_rows ? r : c;
    if (n < 2) return 0.0;
    auto at = [&](std::size_t j) { return along_rows ? p(j, c) : p(r, j); };
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 == n ? i : i + 1;
    return (at(hi) - at(lo)) / (static_cast<double>(hi - lo) * pitch);
}

}  // namespace detail

/// Features for every unmeasured cell of one channel:
///  0  IDW-weighted mean |X̂(t) - x_s| over the K nearest measured neighbours
///  1  population variance of those neighbour values
///  2  distance to the nearest measured cell (µm)
///  3  measured cells within 2·max(pitch) per µm²
///  4  magnitude of the central-difference gradient of X̂ at t
///  5  mean |X̂(t) - X̂(n)| over in-grid 8-connected neighbours n
inline FeatureMatrix extract_features(const Reconstruction& recon, std::size_t channel,
                                      const std::vector<double>* density = nullptr) {
    const GridSpec& g = recon.grid();
    const MeasurementMask& mask = recon.source_mask();
    if (mask.measured_count() == 0) throw ValidationError("extract_features: no measured cells");
    if (channel >= recon.stack().channel_count()) throw ValidationError("extract_features: channel out of range");
    std::vector<double> own_density;
    if (density == nullptr) {
        own_density = measurement_density(mask);
        density = &own_density;
    }
    const Plane& x = recon.channel(channel);
    FeatureMatrix out;
    out.cells = mask.unmeasured_indices();
    out.values.resize(static_cast<Eigen::Index>(out.cells.size()), kFeatureCount);
    for (std::size_t row = 0; row < out.cells.size(); ++row) {
        const std::size_t t = out.cells[row];
        const Cell ct = g.cell(t);
        const double xt = x[t];
        const auto list = recon.neighbors().neighbors(t);

        double wsum = 0.0, wdiff = 0.0, mean = 0.0;
        for (const auto& nb : list) {
            const double w = idw_weight(nb.d2, recon.power());
            wsum += w;
            wdiff += w * std::abs(xt - x[nb.cell]);
            mean += x[nb.cell];
        }
        mean /= static_cast<double>(list.size());
        double var = 0.0;
        for (const auto& nb : list) var += (x[nb.cell] - mean) * (x[nb.cell] - mean);
        var /= static_cast<double>(list.size());

        const double gy = detail::axis_derivative(x, ct.row, ct.col, true, g.pixel_height_um);
        const double gx = detail::axis_derivative(x, ct.row, ct.col, false, g.pixel_width_um);

        double ring = 0.0;
        std::size_t ring_count = 0;
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                if (dr == 0 && dc == 0) continue;
                const auto r1 = static_cast<std::ptrdiff_t>(ct.row) + dr;
                const auto c1 = static_cast<std::ptrdiff_t>(ct.col) + dc;
                if (r1 < 0 || c1 < 0 || r1 >= static_cast<std::ptrdiff_t>(g.rows) ||
                    c1 >= static_cast<std::ptrdiff_t>(g.cols))
                    continue;
                ring += std::abs(xt - x(static_cast<std::size_t>(r1), static_cast<std::size_t>(c1)));
                ++ring_count;
            }
        }

        const auto i = static_cast<Eigen::Index>(row);
        out.values(i, 0) = wdiff / wsum;
        out.values(i, 1) = var;
        out.values(i, 2) = std::sqrt(list.front().d2);
        out.values(i, 3) = (*density)[t];
        out.values(i, 4) = std::sqrt(gx * gx + gy * gy);
        out.values(i, 5) = ring_count == 0 ? 0.0 : ring / static_cast<double>(ring_count);
    }
    return out;
}

}  // namespace dynsamp
