// Reduction-in-distortion (RD) ground truth: the exact per-location decrease
// in absolute reconstruction error, and its Gaussian-filter approximation.
#pragma once

#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "dynsamp/core.hpp"
#include "dynsamp/reconstruction.hpp"

namespace dynsamp {

struct StaticWindow {
    std::size_t side = 15;  // odd, >= 3
    friend bool operator==(const StaticWindow&, const StaticWindow&) = default;
};

struct DynamicWindow {
    double multiple = 3.0;  // radius in units of sigma, >= 1
    friend bool operator==(const DynamicWindow&, const DynamicWindow&) = default;
};

using RdWindow = std::variant<StaticWindow, DynamicWindow>;

struct RdParams {
    double c = 8.0;
    RdWindow window = DynamicWindow{3.0};
    std::vector<std::size_t> channels;  // empty selects every channel

    void validate() const {
        if (!(c > 0.0) || !std::isfinite(c)) throw ValidationError("RD parameter c must be > 0");
        if (const auto* s = std::get_if<StaticWindow>(&window)) {
            if (s->side < 3 || s->side % 2 == 0) throw ValidationError("static window side must be odd and >= 3");
        } else if (!(std::get<DynamicWindow>(window).multiple >= 1.0)) {
            throw ValidationError("dynamic window multiple must be >= 1");
        }
    }

    /// Channel indices this configuration applies to on a d-channel sample.
    [[nodiscard]] std::vector<std::size_t> resolve_channels(std::size_t d) const {
        if (channels.empty()) {
            std::vector<std::size_t> all(d);
            std::iota(all.begin(), all.end(), std::size_t{0});
            return all;
        }
        for (std::size_t z : channels)
            if (z >= d) throw ValidationError("RD channel index out of range");
        return channels;
    }

    friend bool operator==(const RdParams&, const RdParams&) = default;
};

/// "static:15" / "dyn:3"
inline std::string window_to_string(const RdWindow& w) {
    if (const auto* s = std::get_if<StaticWindow>(&w)) return "static:" + std::to_string(s->side);
    const double m = std::get<DynamicWindow>(w).multiple;
    std::string txt = std::to_string(m);
    txt.erase(txt.find_last_not_of('0') + 1);
    if (!txt.empty() && txt.back() == '.') txt.pop_back();
    return "dyn:" + txt;
}

inline RdWindow parse_window(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw ValidationError("window must be static:N or dyn:N, got '" + text + "'");
    const std::string kind = text.substr(0, colon);
    const std::string value = text.substr(colon + 1);
    try {
        if (kind == "static") {
            const long side = std::stol(value);
            if (side < 3 || side % 2 == 0) throw ValidationError("static window side must be odd and >= 3");
            return StaticWindow{static_cast<std::size_t>(side)};
        }
        if (kind == "dyn" || kind == "dynamic") {
            const double m = std::stod(value);
            if (!(m >= 1.0)) throw ValidationError("dynamic window multiple must be >= 1");
            return DynamicWindow{m};
        }
    } catch (const std::logic_error& e) {
        if (dynamic_cast<const ValidationError*>(&e)) throw;
        throw ValidationError("bad window value '" + text + "'");
    }
    throw ValidationError("unknown window kind '" + kind + "'");
}

struct RdMap {
    std::vector<std::size_t> channels;  // sample channel index of each plane
    std::vector<Plane> per_channel;
    Plane average;
};

/// Elementwise mean of the channel planes.
inline Plane average_rd(const RdMap& map) { return mean_plane(map.per_channel); }

/// Nearest-measured distance divided by c; zero for measured cells.
inline double sigma(Cell t, const MeasurementMask& mask, double c) {
    const GridSpec& g = mask.grid();
    if (!g.contains(t)) throw ValidationError("sigma: cell outside grid");
    if (mask.measured_count() == 0) throw ValidationError("sigma: no measured cells");
    if (mask.measured(t)) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t idx = 0; idx < g.size(); ++idx) {
        if (mask.measured(idx)) best = std::min(best, squared_distance(g, t, g.cell(idx)));
    }
    return std::sqrt(best) / c;
}

namespace detail {

inline RdMap finish(std::vector<std::size_t> channels, std::vector<Plane> planes) {
    RdMap map{std::move(channels), std::move(planes), {}};
    map.average = average_rd(map);
    return map;
}

}  // namespace detail

/// Clipped box around a centre cell with unnormalised Gaussian weights
/// exp(-|u - t|^2 / (2 sigma^2)) in physical units. The weight separates into
/// per-row and per-column factors.
class GaussianWindow {
public:
    GaussianWindow(const GridSpec& grid, Cell centre, double sigma, const RdWindow& window) {
        std::ptrdiff_t half_r = 0;
        std::ptrdiff_t half_c = 0;
        if (const auto* w = std::get_if<StaticWindow>(&window)) {
            half_r = half_c = static_cast<std::ptrdiff_t>(w->side / 2);
        } else {
            const double m = std::get<DynamicWindow>(window).multiple;
            half_r = static_cast<std::ptrdiff_t>(std::ceil(m * sigma / grid.pixel_height_um));
            half_c = static_cast<std::ptrdiff_t>(std::ceil(m * sigma / grid.pixel_width_um));
        }
        const auto tr = static_cast<std::ptrdiff_t>(centre.row);
        const auto tc = static_cast<std::ptrdiff_t>(centre.col);
        r_lo_ = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, tr - half_r));
        r_hi_ = static_cast<std::size_t>(std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(grid.rows) - 1, tr + half_r));
        c_lo_ = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, tc - half_c));
        c_hi_ = static_cast<std::size_t>(std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(grid.cols) - 1, tc + half_c));
        const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
        for (std::size_t r = r_lo_; r <= r_hi_; ++r) {
            const double dy = (static_cast<double>(r) - static_cast<double>(centre.row)) * grid.pixel_height_um;
            row_w_.push_back(std::exp(-dy * dy * inv_two_var));
        }
        for (std::size_t c = c_lo_; c <= c_hi_; ++c) {
            const double dx = (static_cast<double>(c) - static_cast<double>(centre.col)) * grid.pixel_width_um;
            col_w_.push_back(std::exp(-dx * dx * inv_two_var));
        }
    }

    /// Weighted sum of `plane` over the window.
    [[nodiscard]] double apply(const Plane& plane) const {
        double acc = 0.0;
        for (std::size_t r = r_lo_; r <= r_hi_; ++r) {
            double row_acc = 0.0;
            for (std::size_t c = c_lo_; c <= c_hi_; ++c) row_acc += plane(r, c) * col_w_[c - c_lo_];
            acc += row_acc * row_w_[r - r_lo_];
        }
        return acc;
    }

    [[nodiscard]] std::size_t height() const { return r_hi_ - r_lo_ + 1; }
    [[nodiscard]] std::size_t width() const { return c_hi_ - c_lo_ + 1; }

private:
    std::size_t r_lo_ = 0, r_hi_ = 0, c_lo_ = 0, c_hi_ = 0;
    std::vector<double> row_w_;
    std::vector<double> col_w_;
};

/// Gaussian-weighted sum of the current absolute reconstruction error around
/// each unmeasured cell, with sigma = nearest-measured distance / c.
inline RdMap approx_rd(const ChannelStack& sample, const Reconstruction& recon, const RdParams& params) {
    params.validate();
    const GridSpec& g = sample.grid();
    if (!(recon.grid() == g)) throw ValidationError("approx_rd: reconstruction grid differs from sample");
    const auto channels = params.resolve_channels(sample.channel_count());
    const NeighborTable& table = recon.neighbors();
    const MeasurementMask& mask = recon.source_mask();
    if (mask.measured_count() == 0) throw ValidationError("approx_rd: no measured cells");

    std::vector<Plane> errors;
    errors.reserve(channels.size());
    for (std::size_t z : channels) {
        Plane d(g.rows, g.cols);
        const Plane& x = sample.channel(z);
        const Plane& xh = recon.channel(z);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = std::abs(x[i] - xh[i]);
        errors.push_back(std::move(d));
    }

    std::vector<Plane> out(channels.size(), Plane(g.rows, g.cols));
    for (std::size_t idx = 0; idx < g.size(); ++idx) {
        if (mask.measured(idx)) continue;
        const double s = std::sqrt(table.neighbors(idx).front().d2) / params.c;
        if (s == 0.0) {
            for (std::size_t k = 0; k < channels.size(); ++k) out[k][idx] = errors[k][idx];
            continue;
        }
        const GaussianWindow window(g, g.cell(idx), s, params.window);
        for (std::size_t k = 0; k < channels.size(); ++k) out[k][idx] = window.apply(errors[k]);
    }
    return detail::finish(channels, std::move(out));
}

inline RdMap approx_rd(const ChannelStack& sample, const MeasuredValues& measured, const RdParams& params,
                       const IdwOptions& idw = {}) {
    return approx_rd(sample, reconstruct(measured, idw, sample.labels()), params);
}

/// Exact RD by re-reconstructing after each hypothetical reveal. Only cells
/// whose neighbour list would gain the revealed cell are recomputed; their
/// new neighbour list is the old one with that cell inserted, so values agree
/// bit for bit with a from-scratch reconstruction.
inline RdMap exact_rd(const ChannelStack& sample, const Reconstruction& recon,
                      const std::vector<std::size_t>& channels) {
    const GridSpec& g = sample.grid();
    if (!(recon.grid() == g)) throw ValidationError("exact_rd: reconstruction grid differs from sample");
    const NeighborTable& table = recon.neighbors();
    const MeasurementMask& mask = table.mask();
    const std::size_t K = table.k();
    const double power = recon.power();
    std::vector<Plane> out(channels.size(), Plane(g.rows, g.cols));
    if (mask.unmeasured_count() == 0 || mask.measured_count() == 0) return detail::finish(channels, std::move(out));

    std::vector<std::span<const double>> truth;
    std::vector<std::span<const double>> old;
    for (std::size_t z : channels) {
        truth.push_back(sample.channel(z).values());
        old.push_back(recon.channel(z).values());
    }
    std::vector<double> err_old(channels.size());
    std::vector<Neighbor> merged(K);
    std::vector<double> weights(K);

    const auto rows = static_cast<std::ptrdiff_t>(g.rows);
    const auto cols = static_cast<std::ptrdiff_t>(g.cols);
    for (std::size_t u = 0; u < g.size(); ++u) {
        if (mask.measured(u)) continue;
        const auto list = table.neighbors(u);
        const bool full = list.size() == K;
        const Cell cu = g.cell(u);
        for (std::size_t k = 0; k < channels.size(); ++k) err_old[k] = std::abs(truth[k][u] - old[k][u]);

        auto contribute = [&](std::size_t t) {
            if (t == u) {
                for (std::size_t k = 0; k < channels.size(); ++k)
                    out[k][t] += err_old[k] - std::abs(truth[k][u] - truth[k][u]);
                return;
            }
            const Cell ct = g.cell(t);
            const double d2 = squared_distance(g, cu.row, cu.col, ct.row, ct.col);
            const Neighbor cand{static_cast<std::uint32_t>(t), d2};
            if (full && !cand.before(list.back().d2, list.back().cell)) return;
            std::size_t n = 0;
            bool placed = false;
            for (const Neighbor& nb : list) {
                if (!placed && cand.before(nb.d2, nb.cell)) {
                    merged[n++] = cand;
                    placed = true;
                    if (n == K) break;
                }
                merged[n++] = nb;
                if (n == K) break;
            }
            if (!placed && n < K) merged[n++] = cand;
            double den = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                weights[j] = idw_weight(merged[j].d2, power);
                den += weights[j];
            }
            for (std::size_t k = 0; k < channels.size(); ++k) {
                double num = 0.0;
                for (std::size_t j = 0; j < n; ++j) num += weights[j] * truth[k][merged[j].cell];
                out[k][t] += err_old[k] - std::abs(truth[k][u] - num / den);
            }
        };

        if (!full) {
            for (std::size_t t = 0; t < g.size(); ++t)
                if (!mask.measured(t)) contribute(t);
            continue;
        }
        const double reach = std::sqrt(list.back().d2);
        const auto half_r = static_cast<std::ptrdiff_t>(reach / g.pixel_height_um) + 1;
        const auto half_c = static_cast<std::ptrdiff_t>(reach / g.pixel_width_um) + 1;
        const auto ur = static_cast<std::ptrdiff_t>(cu.row);
        const auto uc = static_cast<std::ptrdiff_t>(cu.col);
        for (std::ptrdiff_t r = std::max<std::ptrdiff_t>(0, ur - half_r); r <= std::min(rows - 1, ur + half_r); ++r) {
            for (std::ptrdiff_t c = std::max<std::ptrdiff_t>(0, uc - half_c); c <= std::min(cols - 1, uc + half_c);
                 ++c) {
                const auto t = static_cast<std::size_t>(r * cols + c);
                if (!mask.measured(t)) contribute(t);
            }
        }
    }
    return detail::finish(channels, std::move(out));
}

inline RdMap exact_rd(const ChannelStack& sample, const MeasuredValues& measured, const IdwOptions& idw = {}) {
    const auto recon = reconstruct(measured, idw, sample.labels());
    return exact_rd(sample, recon, RdParams{}.resolve_channels(sample.channel_count()));
}

/// Reference exact RD: a full from-scratch reconstruction per candidate.
/// Quadratic in grid size; intended for verification on small grids.
inline RdMap exact_rd_reference(const ChannelStack& sample, const MeasuredValues& measured,
                                const std::vector<std::size_t>& channels, const IdwOptions& idw = {}) {
    const GridSpec& g = sample.grid();
    const MeasurementMask& mask = measured.mask();
    std::vector<Plane> out(channels.size(), Plane(g.rows, g.cols));
    if (mask.unmeasured_count() == 0 || mask.measured_count() == 0) return detail::finish(channels, std::move(out));
    const auto before = reconstruct(measured, idw, sample.labels());
    for (std::size_t t = 0; t < g.size(); ++t) {
        if (mask.measured(t)) continue;
        MeasurementMask grown = mask;
        grown.set(t);
        const auto after = reconstruct(apply_mask(sample, grown), idw, sample.labels());
        for (std::size_t k = 0; k < channels.size(); ++k) {
            const Plane& x = sample.channel(channels[k]);
            const Plane& a = before.channel(channels[k]);
            const Plane& b = after.channel(channels[k]);
            double acc = 0.0;
            for (std::size_t u = 0; u < g.size(); ++u) acc += std::abs(x[u] - a[u]) - std::abs(x[u] - b[u]);
            out[k][t] = acc;
        }
    }
    return detail::finish(channels, std::move(out));
}

}  // namespace dynsamp
