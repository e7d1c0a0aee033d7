// Channel-image construction: m/z window integration, scan-rate based row
// realignment onto a physically uniform grid, and synthetic tissue phantoms.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dynsamp/core.hpp"

namespace dynsamp {

inline constexpr double kDefaultPpm = 20.0;

struct MzWindow {
    double center = 0.0;
    double ppm = kDefaultPpm;

    [[nodiscard]] double lower() const { return center * (1.0 - ppm * 1e-6); }
    [[nodiscard]] double upper() const { return center * (1.0 + ppm * 1e-6); }
};

struct Peak {
    double mz = 0.0;
    double intensity = 0.0;
};

/// Sum of intensities whose m/z lies in the closed window range.
inline double integrate_window(std::span<const Peak> spectrum, const MzWindow& window) {
    const double lo = window.lower();
    const double hi = window.upper();
    double total = 0.0;
    for (const Peak& p : spectrum) {
        if (p.mz >= lo && p.mz <= hi) total += p.intensity;
    }
    return total;
}

struct SampleMeta {
    std::string name;
    double width_mm = 0.0;
    double height_mm = 0.0;
    double scan_rate_um_per_s = 0.0;
    double acq_rate_spectra_per_s = 0.0;

    void validate() const {
        if (!(width_mm > 0.0) || !(height_mm > 0.0) || !(scan_rate_um_per_s > 0.0) ||
            !(acq_rate_spectra_per_s > 0.0)) {
            throw ValidationError("sample metadata: physical quantities must be > 0");
        }
    }
};

/// Horizontal positions per row: FOV width over scan rate times acquisition
/// rate, so every column spans the same physical width.
inline std::size_t target_columns(const SampleMeta& meta) {
    meta.validate();
    const double cols = std::round(meta.width_mm * 1000.0 / meta.scan_rate_um_per_s * meta.acq_rate_spectra_per_s);
    return std::max<std::size_t>(2, static_cast<std::size_t>(cols));
}

/// One acquired row: per-spectrum timestamps and window-integrated channel
/// intensities (`intensities[spectrum][channel]`).
struct RawRow {
    std::vector<double> timestamps;
    std::vector<std::vector<double>> intensities;

    void validate() const {
        if (timestamps.empty()) throw ValidationError("raw row is empty");
        if (intensities.size() != timestamps.size()) throw ValidationError("one intensity vector per timestamp");
        for (std::size_t i = 1; i < timestamps.size(); ++i)
            if (!(timestamps[i] > timestamps[i - 1])) throw ValidationError("row timestamps must strictly increase");
        for (const auto& v : intensities)
            if (v.size() != intensities.front().size()) throw ValidationError("ragged channel count in raw row");
    }
};

/// Linear interpolation in time onto `n_cols` evenly spaced instants spanning
/// the first to last timestamp. Returns one vector per channel. A row with a
/// single spectrum realigns to a constant vector.
inline std::vector<std::vector<double>> realign_row(const RawRow& row, std::size_t n_cols) {
    row.validate();
    if (n_cols < 2) throw ValidationError("realign_row: need at least two columns");
    const std::size_t d = row.intensities.front().size();
    std::vector<std::vector<double>> out(d, std::vector<double>(n_cols));
    const auto& ts = row.timestamps;
    if (ts.size() == 1) {
        for (std::size_t z = 0; z < d; ++z) std::fill(out[z].begin(), out[z].end(), row.intensities[0][z]);
        return out;
    }
    const double t0 = ts.front();
    const double t1 = ts.back();
    std::size_t seg = 0;
    for (std::size_t j = 0; j < n_cols; ++j) {
        double t = t0 + (t1 - t0) * static_cast<double>(j) / static_cast<double>(n_cols - 1);
        if (j == n_cols - 1) t = t1;
        while (seg + 2 < ts.size() && t > ts[seg + 1]) ++seg;
        const double a = ts[seg];
        const double b = ts[seg + 1];
        const double f = std::clamp((t - a) / (b - a), 0.0, 1.0);
        for (std::size_t z = 0; z < d; ++z) {
            const double va = row.intensities[seg][z];
            const double vb = row.intensities[seg + 1][z];
            out[z][j] = f == 1.0 ? vb : va + (vb - va) * f;
        }
    }
    return out;
}

/// Realign every non-defective row onto the scan-rate derived column count.
/// Pixel pitch follows from the FOV over the kept grid shape.
inline ChannelStack build_aligned_stack(std::span<const RawRow> rows, const SampleMeta& meta,
                                        std::vector<double> labels, std::span<const std::size_t> defective_rows = {}) {
    meta.validate();
    const std::size_t n_cols = target_columns(meta);
    std::vector<std::size_t> kept;
    for (std::size_t r = 0; r < rows.size(); ++r)
        if (std::ranges::find(defective_rows, r) == defective_rows.end()) kept.push_back(r);
    if (kept.empty()) throw ValidationError("no rows left after dropping defective rows");
    const GridSpec grid(kept.size(), n_cols, meta.width_mm * 1000.0 / static_cast<double>(n_cols),
                        meta.height_mm * 1000.0 / static_cast<double>(kept.size()));
    const std::size_t d = labels.size();
    std::vector<Plane> planes(d, Plane(grid.rows, grid.cols));
    for (std::size_t i = 0; i < kept.size(); ++i) {
        const auto aligned = realign_row(rows[kept[i]], n_cols);
        if (aligned.size() != d) throw ValidationError("raw row channel count differs from label count");
        for (std::size_t z = 0; z < d; ++z)
            for (std::size_t c = 0; c < n_cols; ++c) planes[z](i, c) = std::max(0.0, aligned[z][c]);
    }
    return ChannelStack(grid, std::move(planes), std::move(labels));
}

namespace detail {

struct Blob {
    double cy, cx;  // normalised [0,1] coordinates
    double sy, sx;  // normalised standard deviations
    double angle;

    [[nodiscard]] double at(double y, double x) const {
        const double dy = y - cy;
        const double dx = x - cx;
        const double ca = std::cos(angle);
        const double sa = std::sin(angle);
        const double u = (ca * dx + sa * dy) / sx;
        const double v = (-sa * dx + ca * dy) / sy;
        return std::exp(-0.5 * (u * u + v * v));
    }
};

// Rotated ellipse in normalised coordinates; drawn first from the phantom RNG.
struct Support {
    double cy, cx, ry, rx, angle;

    static Support draw(std::mt19937_64& rng) {
        auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
        Support s{};
        s.cy = uni(0.42, 0.58);
        s.cx = uni(0.42, 0.58);
        s.ry = uni(0.28, 0.42);
        s.rx = uni(0.28, 0.42);
        s.angle = uni(0.0, std::numbers::pi);
        return s;
    }

    [[nodiscard]] bool contains(double y, double x) const {
        const double dy = y - cy;
        const double dx = x - cx;
        const double u = (std::cos(angle) * dx + std::sin(angle) * dy) / rx;
        const double v = (-std::sin(angle) * dx + std::cos(angle) * dy) / ry;
        return u * u + v * v <= 1.0;
    }
};

}  // namespace detail

/// Synthetic multichannel tissue. A shared elliptical support region carries a
/// per-channel baseline plus anisotropic Gaussian blobs, some shared across
/// channels (with channel-specific amplitudes) and some channel-specific.
/// Each channel is normalised to peak 1, then receives N(0, 0.01) noise and is
/// clipped to [0, 1]. Pure in (seed, grid, d).
inline ChannelStack generate_phantom(std::uint64_t seed, const GridSpec& grid, std::size_t d) {
    grid.validate();
    if (d < 1) throw ValidationError("phantom needs at least one channel");
    std::mt19937_64 rng(seed);
    auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    auto count = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

    const auto support = detail::Support::draw(rng);
    auto inside = [&](double y, double x) { return support.contains(y, x); };
    auto blob_in_support = [&]() {
        detail::Blob b{};
        do {
            b.cy = uni(0.0, 1.0);
            b.cx = uni(0.0, 1.0);
        } while (!inside(b.cy, b.cx));
        b.sy = uni(0.04, 0.14);
        b.sx = uni(0.04, 0.14);
        b.angle = uni(0.0, std::numbers::pi);
        return b;
    };

    const int shared_count = count(2, 5);
    std::vector<detail::Blob> shared;
    for (int i = 0; i < shared_count; ++i) shared.push_back(blob_in_support());

    auto norm_y = [&](std::size_t r) { return (static_cast<double>(r) + 0.5) / static_cast<double>(grid.rows); };
    auto norm_x = [&](std::size_t c) { return (static_cast<double>(c) + 0.5) / static_cast<double>(grid.cols); };

    std::vector<Plane> planes;
    std::vector<double> labels;
    std::normal_distribution<double> noise(0.0, 0.01);
    for (std::size_t z = 0; z < d; ++z) {
        const double baseline = uni(0.15, 0.35);
        std::vector<std::pair<detail::Blob, double>> blobs;
        for (const auto& b : shared) blobs.emplace_back(b, uni(0.2, 1.0));
        const int own = count(1, 3);
        for (int i = 0; i < own; ++i) {
            auto b = blob_in_support();
            blobs.emplace_back(b, uni(0.5, 1.2));
        }
        Plane p(grid.rows, grid.cols);
        for (std::size_t r = 0; r < grid.rows; ++r) {
            for (std::size_t c = 0; c < grid.cols; ++c) {
                const double y = norm_y(r);
                const double x = norm_x(c);
                if (!inside(y, x)) continue;
                double v = baseline;
                for (const auto& [b, amp] : blobs) v += amp * b.at(y, x);
                p(r, c) = v;
            }
        }
        const double peak = p.max();
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double v = (peak > 0.0 ? p[i] / peak : 0.0) + noise(rng);
            p[i] = std::clamp(v, 0.0, 1.0);
        }
        planes.push_back(std::move(p));
        labels.push_back(500.0 + 37.5 * static_cast<double>(z));
    }
    return ChannelStack(grid, std::move(planes), std::move(labels));
}

/// Support region membership used by generate_phantom (same seed, same grid).
inline std::vector<std::uint8_t> phantom_support(std::uint64_t seed, const GridSpec& grid) {
    std::mt19937_64 rng(seed);
    const auto support = detail::Support::draw(rng);
    std::vector<std::uint8_t> out(grid.size(), 0);
    for (std::size_t r = 0; r < grid.rows; ++r) {
        for (std::size_t c = 0; c < grid.cols; ++c) {
            const double y = (static_cast<double>(r) + 0.5) / static_cast<double>(grid.rows);
            const double x = (static_cast<double>(c) + 0.5) / static_cast<double>(grid.cols);
            out[r * grid.cols + c] = support.contains(y, x) ? 1 : 0;
        }
    }
    return out;
}

}  // namespace dynsamp
