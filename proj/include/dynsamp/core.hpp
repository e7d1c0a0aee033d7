// Grid, plane, mask, and multichannel image types shared across the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dynsamp {

/// Bad input (shape mismatch, out-of-range parameter, malformed file).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Failure while running an otherwise valid computation.
class RuntimeFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Cell {
    std::size_t row = 0;
    std::size_t col = 0;

    friend bool operator==(const Cell&, const Cell&) = default;
    friend auto operator<=>(const Cell&, const Cell&) = default;
};

/// Grid geometry. Rows run along the physical y axis (pixel_height_um),
/// columns along x (pixel_width_um).
struct GridSpec {
    std::size_t rows = 0;
    std::size_t cols = 0;
    double pixel_width_um = 1.0;
    double pixel_height_um = 1.0;

    GridSpec() = default;
    GridSpec(std::size_t r, std::size_t c, double width_um = 1.0, double height_um = 1.0)
        : rows(r), cols(c), pixel_width_um(width_um), pixel_height_um(height_um) {
        validate();
    }

    void validate() const {
        if (rows < 1 || cols < 1 || rows * cols < 2) {
            throw ValidationError("grid must hold at least two cells, got " + std::to_string(rows) + "x" +
                                  std::to_string(cols));
        }
        if (!(pixel_width_um > 0.0) || !(pixel_height_um > 0.0) || !std::isfinite(pixel_width_um) ||
            !std::isfinite(pixel_height_um)) {
            throw ValidationError("pixel dimensions must be positive and finite");
        }
    }

    [[nodiscard]] std::size_t size() const { return rows * cols; }
    [[nodiscard]] bool contains(Cell c) const { return c.row < rows && c.col < cols; }
    [[nodiscard]] std::size_t index(Cell c) const { return c.row * cols + c.col; }
    [[nodiscard]] Cell cell(std::size_t idx) const { return {idx / cols, idx % cols}; }

    /// Same shape and pitch.
    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Squared physical distance between two cells. Every distance-dependent
/// computation goes through this one expression so neighbour orderings and
/// IDW weights agree bit for bit across code paths.
inline double squared_distance(const GridSpec& grid, std::size_t r0, std::size_t c0, std::size_t r1,
                               std::size_t c1) {
    const double dy = (static_cast<double>(r0) - static_cast<double>(r1)) * grid.pixel_height_um;
    const double dx = (static_cast<double>(c0) - static_cast<double>(c1)) * grid.pixel_width_um;
    return dy * dy + dx * dx;
}

inline double squared_distance(const GridSpec& grid, Cell a, Cell b) {
    return squared_distance(grid, a.row, a.col, b.row, b.col);
}

/// Euclidean distance between cell centres in micrometres.
inline double physical_distance(Cell a, Cell b, const GridSpec& grid) {
    if (!grid.contains(a) || !grid.contains(b)) {
        throw ValidationError("physical_distance: cell outside grid");
    }
    return std::sqrt(squared_distance(grid, a, b));
}

/// Dense row-major 2-D array of doubles.
class Plane {
public:
    Plane() = default;
    Plane(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Plane(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ValidationError("plane data size does not match shape");
        }
    }

    [[nodiscard]] std::size_t rows() const { return rows_; }
    [[nodiscard]] std::size_t cols() const { return cols_; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    [[nodiscard]] std::span<const double> values() const { return data_; }
    [[nodiscard]] std::span<double> values() { return data_; }

    [[nodiscard]] double max() const { return data_.empty() ? 0.0 : *std::ranges::max_element(data_); }
    [[nodiscard]] double min() const { return data_.empty() ? 0.0 : *std::ranges::min_element(data_); }
    [[nodiscard]] double sum() const {
        double s = 0.0;
        for (double v : data_) s += v;
        return s;
    }

    friend bool operator==(const Plane&, const Plane&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Multichannel intensity image: one non-negative plane per m/z channel.
class ChannelStack {
public:
    ChannelStack() = default;
    ChannelStack(GridSpec grid, std::vector<Plane> channels, std::vector<double> labels)
        : grid_(grid), channels_(std::move(channels)), labels_(std::move(labels)) {
        grid_.validate();
        if (channels_.empty()) throw ValidationError("channel stack needs at least one channel");
        if (labels_.size() != channels_.size()) throw ValidationError("one label per channel required");
        for (std::size_t i = 1; i < labels_.size(); ++i) {
            if (!(labels_[i] > labels_[i - 1])) throw ValidationError("channel labels must be strictly increasing");
        }
        for (const auto& p : channels_) {
            if (p.rows() != grid_.rows || p.cols() != grid_.cols) {
                throw ValidationError("channel plane shape does not match grid");
            }
            for (double v : p.values()) {
                if (!std::isfinite(v) || v < 0.0) throw ValidationError("intensities must be finite and >= 0");
            }
        }
    }

    [[nodiscard]] const GridSpec& grid() const { return grid_; }
    [[nodiscard]] std::size_t channel_count() const { return channels_.size(); }
    [[nodiscard]] const Plane& channel(std::size_t z) const { return channels_.at(z); }
    [[nodiscard]] const std::vector<Plane>& channels() const { return channels_; }
    [[nodiscard]] const std::vector<double>& labels() const { return labels_; }

    friend bool operator==(const ChannelStack&, const ChannelStack&) = default;

private:
    GridSpec grid_;
    std::vector<Plane> channels_;
    std::vector<double> labels_;
};

/// Partition of the grid into measured (S) and unmeasured (T) cells.
class MeasurementMask {
public:
    MeasurementMask() = default;
    explicit MeasurementMask(GridSpec grid) : grid_(grid), measured_(grid.size(), 0) { grid_.validate(); }
    MeasurementMask(GridSpec grid, std::vector<std::uint8_t> measured)
        : grid_(grid), measured_(std::move(measured)) {
        grid_.validate();
        if (measured_.size() != grid_.size()) throw ValidationError("mask size does not match grid");
        for (auto& m : measured_) m = m ? 1 : 0;
        count_ = static_cast<std::size_t>(std::ranges::count(measured_, std::uint8_t{1}));
    }

    [[nodiscard]] const GridSpec& grid() const { return grid_; }
    [[nodiscard]] bool measured(std::size_t idx) const { return measured_[idx] != 0; }
    [[nodiscard]] bool measured(Cell c) const { return measured_[grid_.index(c)] != 0; }
    [[nodiscard]] std::size_t measured_count() const { return count_; }
    [[nodiscard]] std::size_t unmeasured_count() const { return measured_.size() - count_; }
    [[nodiscard]] double measured_fraction() const {
        return static_cast<double>(count_) / static_cast<double>(measured_.size());
    }
    [[nodiscard]] std::span<const std::uint8_t> bits() const { return measured_; }

    void set(std::size_t idx) {
        if (!measured_[idx]) {
            measured_[idx] = 1;
            ++count_;
        }
    }
    void set(Cell c) { set(grid_.index(c)); }

    /// Row-major indices of S.
    [[nodiscard]] std::vector<std::size_t> measured_indices() const {
        std::vector<std::size_t> out;
        out.reserve(count_);
        for (std::size_t i = 0; i < measured_.size(); ++i)
            if (measured_[i]) out.push_back(i);
        return out;
    }
    /// Row-major indices of T.
    [[nodiscard]] std::vector<std::size_t> unmeasured_indices() const {
        std::vector<std::size_t> out;
        out.reserve(measured_.size() - count_);
        for (std::size_t i = 0; i < measured_.size(); ++i)
            if (!measured_[i]) out.push_back(i);
        return out;
    }

    friend bool operator==(const MeasurementMask&, const MeasurementMask&) = default;

private:
    GridSpec grid_;
    std::vector<std::uint8_t> measured_;
    std::size_t count_ = 0;
};

/// Ground-truth values revealed at S, per channel. Values are stored densely
/// over S in row-major order; `slot` maps a grid index to its position in S.
class MeasuredValues {
public:
    MeasuredValues() = default;
    MeasuredValues(MeasurementMask mask, std::vector<std::vector<double>> values)
        : mask_(std::move(mask)), cells_(mask_.measured_indices()), values_(std::move(values)),
          slot_(mask_.grid().size(), -1) {
        for (const auto& ch : values_) {
            if (ch.size() != cells_.size()) throw ValidationError("measured values must cover every measured cell");
        }
        for (std::size_t i = 0; i < cells_.size(); ++i) slot_[cells_[i]] = static_cast<std::int64_t>(i);
    }

    [[nodiscard]] const MeasurementMask& mask() const { return mask_; }
    [[nodiscard]] const GridSpec& grid() const { return mask_.grid(); }
    [[nodiscard]] std::size_t channel_count() const { return values_.size(); }
    [[nodiscard]] std::size_t size() const { return cells_.size(); }
    [[nodiscard]] const std::vector<std::size_t>& cells() const { return cells_; }
    [[nodiscard]] std::span<const double> channel_values(std::size_t z) const { return values_.at(z); }

    [[nodiscard]] bool has(std::size_t idx) const { return slot_[idx] >= 0; }
    /// Value at a measured grid index; throws for unmeasured cells.
    [[nodiscard]] double value(std::size_t z, std::size_t idx) const {
        if (slot_.at(idx) < 0) throw ValidationError("no measured value at unmeasured cell");
        return values_[z][static_cast<std::size_t>(slot_[idx])];
    }

private:
    MeasurementMask mask_;
    std::vector<std::size_t> cells_;
    std::vector<std::vector<double>> values_;
    std::vector<std::int64_t> slot_;
};

/// Reveal ground truth at every measured cell.
inline MeasuredValues apply_mask(const ChannelStack& sample, const MeasurementMask& mask) {
    if (!(mask.grid() == sample.grid())) throw ValidationError("apply_mask: mask grid differs from sample grid");
    const auto cells = mask.measured_indices();
    std::vector<std::vector<double>> values(sample.channel_count());
    for (std::size_t z = 0; z < sample.channel_count(); ++z) {
        const Plane& p = sample.channel(z);
        values[z].reserve(cells.size());
        for (std::size_t idx : cells) values[z].push_back(p[idx]);
    }
    return MeasuredValues(mask, std::move(values));
}

/// Elementwise mean of equally shaped planes.
inline Plane mean_plane(std::span<const Plane> planes) {
    if (planes.empty()) throw ValidationError("mean of zero planes");
    Plane out(planes.front().rows(), planes.front().cols());
    for (const auto& p : planes) {
        if (p.rows() != out.rows() || p.cols() != out.cols()) throw ValidationError("plane shape mismatch");
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += p[i];
    }
    const double d = static_cast<double>(planes.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= d;
    return out;
}

}  // namespace dynsamp
