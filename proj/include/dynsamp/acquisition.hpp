// Simulated acquisition: initial masks, ERD-guided point and line selection,
// stopping rules and per-step traces.
#pragma once

#include <chrono>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dynsamp/erd.hpp"
#include "dynsamp/io.hpp"
#include "dynsamp/metrics.hpp"

namespace dynsamp {

enum class ScanMode { Pointwise, Linewise };

inline std::string to_string(ScanMode m) { return m == ScanMode::Pointwise ? "pointwise" : "linewise"; }

inline ScanMode parse_scan_mode(const std::string& s) {
    if (s == "pointwise") return ScanMode::Pointwise;
    if (s == "linewise") return ScanMode::Linewise;
    throw ValidationError("mode must be pointwise or linewise, got '" + s + "'");
}

/// Count for a percentage of `total`, rounded up.
inline std::size_t percent_count(double percent, std::size_t total) {
    return static_cast<std::size_t>(std::ceil(percent * static_cast<double>(total) / 100.0 - 1e-9));
}

struct AcquisitionConfig {
    ScanMode mode = ScanMode::Pointwise;
    std::optional<double> group_fraction;  // % of FOV per pointwise step; unset = one cell
    double line_fraction = 30.0;           // % of a row per linewise step
    double initial_fraction = 1.0;         // pointwise initial random % of FOV
    double stop_fov = 30.0;                // pointwise stop threshold, % of FOV
    std::uint64_t seed = 0;
    std::size_t neighbors = 10;
    std::vector<std::size_t> channels;  // ERD channels; empty = model default

    void validate() const {
        auto in_range = [](double v) { return v > 0.0 && v <= 100.0; };
        if (group_fraction && !in_range(*group_fraction)) throw ValidationError("group fraction must be in (0, 100]");
        if (!in_range(line_fraction)) throw ValidationError("line fraction must be in (0, 100]");
        if (!in_range(initial_fraction)) throw ValidationError("initial fraction must be in (0, 100]");
        if (!in_range(stop_fov)) throw ValidationError("stop threshold must be in (0, 100]");
        if (neighbors < 1) throw ValidationError("neighbour count must be >= 1");
    }
};

inline json to_json(const AcquisitionConfig& c) {
    json j{{"mode", to_string(c.mode)},        {"line_fraction", c.line_fraction},
           {"initial_fraction", c.initial_fraction}, {"stop_fov", c.stop_fov},
           {"seed", c.seed},                   {"neighbors", c.neighbors},
           {"channels", c.channels}};
    if (c.group_fraction) j["group_fraction"] = *c.group_fraction;
    return j;
}

/// J: rows holding at least one measured cell; K: the rest.
struct RowSets {
    std::vector<std::size_t> measured;
    std::vector<std::size_t> unmeasured;
};

inline RowSets row_sets(const MeasurementMask& mask) {
    RowSets out;
    const GridSpec& g = mask.grid();
    for (std::size_t r = 0; r < g.rows; ++r) {
        bool any = false;
        for (std::size_t c = 0; c < g.cols && !any; ++c) any = mask.measured(r * g.cols + c);
        (any ? out.measured : out.unmeasured).push_back(r);
    }
    return out;
}

/// Top cells of `erd` among `candidates` (row-major ascending), highest
/// first; ties keep row-major order.
inline std::vector<std::size_t> top_cells(const Plane& erd, std::vector<std::size_t> candidates, std::size_t count) {
    count = std::min(count, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(count), candidates.end(),
                      [&](std::size_t a, std::size_t b) { return erd[a] > erd[b] || (erd[a] == erd[b] && a < b); });
    candidates.resize(count);
    return candidates;
}

inline std::size_t pointwise_group_size(std::optional<double> group_fraction, std::size_t total) {
    return group_fraction ? std::max<std::size_t>(1, percent_count(*group_fraction, total)) : 1;
}

/// The top max(1, ceil(group%·|Ω|)) unmeasured cells by average ERD.
inline std::vector<std::size_t> select_pointwise(const Plane& erd_average, const MeasurementMask& mask,
                                                 std::optional<double> group_fraction = std::nullopt) {
    if (mask.unmeasured_count() == 0) throw ValidationError("select_pointwise: nothing left to measure");
    return top_cells(erd_average, mask.unmeasured_indices(),
                     pointwise_group_size(group_fraction, mask.grid().size()));
}

/// Row in K with the largest ERD sum (lowest index on ties), then the top
/// ceil(line%·m) cells of that row. Empty when K is empty.
inline std::vector<std::size_t> select_linewise(const Plane& erd_average, const MeasurementMask& mask,
                                                const RowSets& rows, double line_fraction) {
    if (rows.unmeasured.empty()) return {};
    const GridSpec& g = mask.grid();
    std::size_t best = rows.unmeasured.front();
    double best_sum = -std::numeric_limits<double>::infinity();
    for (std::size_t r : rows.unmeasured) {
        double s = 0.0;
        for (std::size_t c = 0; c < g.cols; ++c) s += erd_average[r * g.cols + c];
        if (s > best_sum) {
            best_sum = s;
            best = r;
        }
    }
    std::vector<std::size_t> cells;
    for (std::size_t c = 0; c < g.cols; ++c)
        if (!mask.measured(best * g.cols + c)) cells.push_back(best * g.cols + c);
    return top_cells(erd_average, std::move(cells), std::max<std::size_t>(1, percent_count(line_fraction, g.cols)));
}

/// Rows floor(0.25n), floor(0.5n), floor(0.75n), deduplicated.
inline std::vector<std::size_t> initial_lines(std::size_t n) {
    std::vector<std::size_t> rows;
    for (std::size_t q : {1u, 2u, 3u}) {
        const std::size_t r = q * n / 4;
        if (std::find(rows.begin(), rows.end(), r) == rows.end()) rows.push_back(r);
    }
    return rows;
}

/// ceil(count) evenly spaced column positions: floor((i + 0.5)·m / count).
inline std::vector<std::size_t> evenly_spaced(std::size_t m, std::size_t count) {
    count = std::clamp<std::size_t>(count, 1, m);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(static_cast<std::size_t>((static_cast<double>(i) + 0.5) * static_cast<double>(m) /
                                               static_cast<double>(count)));
    return out;
}

inline MeasurementMask initial_mask(const AcquisitionConfig& cfg, const GridSpec& grid) {
    cfg.validate();
    grid.validate();
    MeasurementMask mask(grid);
    if (cfg.mode == ScanMode::Pointwise) {
        std::vector<std::size_t> order(grid.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(cfg.seed);
        std::shuffle(order.begin(), order.end(), rng);
        const std::size_t count = std::clamp<std::size_t>(percent_count(cfg.initial_fraction, grid.size()), 1,
                                                          grid.size() - 1);
        for (std::size_t i = 0; i < count; ++i) mask.set(order[i]);
    } else {
        const std::size_t per_row = std::max<std::size_t>(1, percent_count(cfg.line_fraction, grid.cols));
        for (std::size_t r : initial_lines(grid.rows))
            for (std::size_t c : evenly_spaced(grid.cols, per_row)) mask.set(r * grid.cols + c);
    }
    return mask;
}

struct StepTrace {
    std::size_t step = 0;
    std::vector<std::size_t> selected;  // cells revealed to reach this state
    MeasurementMask mask;
    double fov_percent = 0.0;
    std::vector<double> psnr;  // per channel, uncapped
    double average_psnr = 0.0;  // mean of capped per-channel values
    double erd_time_s = 0.0;
    // Kept at whole-percent milestones and at the final step.
    std::optional<ChannelStack> reconstruction;
    std::optional<ErdMap> erd;
};

struct AcquisitionResult {
    std::vector<StepTrace> steps;
    std::string stop_reason;
    std::optional<std::string> error;
    std::vector<std::size_t> erd_channels;

    [[nodiscard]] const MeasurementMask& final_mask() const { return steps.back().mask; }
    [[nodiscard]] std::vector<double> percents() const {
        std::vector<double> out;
        for (const auto& s : steps) out.push_back(s.fov_percent);
        return out;
    }
    /// Capped average PSNR at each whole-percent milestone.
    [[nodiscard]] std::vector<double> milestone_psnr() const {
        std::vector<double> out;
        for (std::size_t i : milestone_indices(percents())) out.push_back(steps[i].average_psnr);
        return out;
    }
    [[nodiscard]] double psnr_auc() const { return trapezoid_auc(milestone_psnr()); }
    [[nodiscard]] double mean_erd_time() const {
        double t = 0.0;
        for (const auto& s : steps) t += s.erd_time_s;
        return steps.empty() ? 0.0 : t / static_cast<double>(steps.size());
    }
};

/// Reveal, reconstruct, score, estimate ERD and select until a stop rule
/// fires: pointwise reaching stop_fov, linewise running out of unvisited
/// rows, the ERD being zero over T, or nothing left to measure. A failure
/// inside the model ends the run with the partial trace and `error` set.
inline AcquisitionResult run_acquisition(const ChannelStack& sample, const ErdModel& model,
                                         const AcquisitionConfig& cfg,
                                         std::optional<MeasurementMask> start = std::nullopt) {
    cfg.validate();
    const GridSpec& g = sample.grid();
    MeasurementMask mask = start ? *start : initial_mask(cfg, g);
    if (!(mask.grid() == g)) throw ValidationError("run_acquisition: initial mask grid differs from sample");
    if (mask.measured_count() == 0) throw ValidationError("run_acquisition: initial mask is empty");
    for (std::size_t z : cfg.channels)
        if (z >= sample.channel_count()) throw ValidationError("run_acquisition: channel index out of range");
    NeighborTable table(mask, cfg.neighbors);

    AcquisitionResult result;
    std::vector<std::size_t> selected = mask.measured_indices();
    int last_milestone = -1;
    for (std::size_t step = 0;; ++step) {
        const MeasuredValues measured = apply_mask(sample, mask);
        const Reconstruction recon =
            reconstruct(measured, std::make_shared<const NeighborTable>(table), sample.labels());

        StepTrace trace;
        trace.step = step;
        trace.selected = std::move(selected);
        trace.mask = mask;
        trace.fov_percent = fov_percent(mask.measured_count(), g.size());
        double sum = 0.0;
        for (std::size_t z = 0; z < sample.channel_count(); ++z) {
            const double p = psnr(sample.channel(z), recon.channel(z));
            trace.psnr.push_back(p);
            sum += cap_psnr(p);
        }
        trace.average_psnr = sum / static_cast<double>(sample.channel_count());

        ErdMap erd;
        try {
            const auto t0 = std::chrono::steady_clock::now();
            erd = erd_for(model, recon, measured, cfg.channels);
            trace.erd_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        } catch (const std::exception& e) {
            trace.reconstruction = recon.stack();
            result.steps.push_back(std::move(trace));
            result.stop_reason = "error";
            result.error = e.what();
            return result;
        }
        result.erd_channels = erd.channels;

        const RowSets rows = row_sets(mask);
        std::string stop;
        if (mask.unmeasured_count() == 0) stop = "complete";
        else if (cfg.mode == ScanMode::Pointwise && trace.fov_percent + 1e-9 >= cfg.stop_fov) stop = "fov";
        else if (cfg.mode == ScanMode::Linewise && rows.unmeasured.empty()) stop = "rows";
        else {
            bool zero = true;
            for (std::size_t i = 0; i < g.size() && zero; ++i) zero = mask.measured(i) || erd.average[i] == 0.0;
            if (zero) stop = "zero-erd";
        }

        const int milestone = static_cast<int>(std::floor(trace.fov_percent + 1e-9));
        if (milestone > last_milestone || !stop.empty()) {
            trace.reconstruction = recon.stack();
            trace.erd = erd;
            last_milestone = milestone;
        }
        result.steps.push_back(std::move(trace));
        if (!stop.empty()) {
            result.stop_reason = stop;
            return result;
        }

        selected = cfg.mode == ScanMode::Pointwise ? select_pointwise(erd.average, mask, cfg.group_fraction)
                                                   : select_linewise(erd.average, mask, rows, cfg.line_fraction);
        for (std::size_t idx : selected) {
            table.reveal(idx);
            mask.set(idx);
        }
    }
}

inline std::string step_name(std::size_t step) {
    std::ostringstream os;
    os << "step" << std::setw(4) << std::setfill('0') << step;
    return os.str();
}

/// One directory per run: trace.csv, a mask PGM per step, reconstructions
/// and average ERD at milestone steps, and config.json.
inline void write_trace(const fs::path& dir, const AcquisitionResult& result, const ChannelStack& sample,
                        const json& config) {
    fs::create_directories(dir);
    std::ofstream csv(dir / "trace.csv");
    if (!csv) throw RuntimeFailure("cannot write " + (dir / "trace.csv").string());
    csv << "step,fov_percent,selected";
    for (double label : sample.labels()) csv << ",psnr_" << format_label(label);
    csv << ",avg_psnr,erd_time_s\n";
    csv << std::setprecision(10);
    for (const auto& s : result.steps) {
        csv << s.step << ',' << s.fov_percent << ',' << s.selected.size();
        for (double p : s.psnr) csv << ',' << cap_psnr(p);
        csv << ',' << s.average_psnr << ',' << s.erd_time_s << '\n';
        const std::string tag = step_name(s.step);
        write_mask_pgm(dir / ("mask_" + tag + ".pgm"), s.mask);
        if (s.reconstruction) {
            for (std::size_t z = 0; z < s.reconstruction->channel_count(); ++z)
                write_plane_f32(dir / ("recon_" + format_label(sample.labels()[z]) + "_" + tag + ".f32"),
                                s.reconstruction->channel(z));
        }
        if (s.erd) write_plane_f32(dir / ("erd_average_" + tag + ".f32"), s.erd->average);
    }
    json cfg = config;
    cfg["stop_reason"] = result.stop_reason;
    if (result.error) cfg["error"] = *result.error;
    cfg["steps"] = result.steps.size();
    cfg["final_fov_percent"] = result.steps.empty() ? 0.0 : result.steps.back().fov_percent;
    cfg["erd_channels"] = result.erd_channels;
    cfg["rows"] = sample.grid().rows;
    cfg["cols"] = sample.grid().cols;
    cfg["pixel_width_um"] = sample.grid().pixel_width_um;
    cfg["pixel_height_um"] = sample.grid().pixel_height_um;
    std::ofstream(dir / "config.json") << cfg.dump(2) << '\n';
}

/// Read back what write_trace stored: masks, percentages, average PSNR, ERD
/// time, and the average ERD at milestone steps. Reconstructions are not
/// reloaded.
inline AcquisitionResult read_trace(const fs::path& dir) {
    json cfg;
    {
        std::ifstream in(dir / "config.json");
        if (!in) throw ValidationError("missing config.json in " + dir.string());
        try {
            cfg = json::parse(in);
        } catch (const json::exception& e) {
            throw ValidationError(dir.string() + "/config.json: " + e.what());
        }
    }
    AcquisitionResult out;
    try {
        const GridSpec g(cfg.at("rows").get<std::size_t>(), cfg.at("cols").get<std::size_t>(),
                         cfg.value("pixel_width_um", 1.0), cfg.value("pixel_height_um", 1.0));
        out.stop_reason = cfg.value("stop_reason", "");
        if (cfg.contains("error")) out.error = cfg.at("error").get<std::string>();
        out.erd_channels = cfg.value("erd_channels", std::vector<std::size_t>{});
        std::ifstream csv(dir / "trace.csv");
        if (!csv) throw ValidationError("missing trace.csv in " + dir.string());
        std::string line;
        std::getline(csv, line);
        while (std::getline(csv, line)) {
            std::vector<std::string> fields;
            std::stringstream ss(line);
            for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
            if (fields.size() < 5) throw ValidationError("malformed trace.csv line: " + line);
            StepTrace s;
            s.step = std::stoul(fields[0]);
            s.fov_percent = std::stod(fields[1]);
            s.average_psnr = std::stod(fields[fields.size() - 2]);
            s.erd_time_s = std::stod(fields.back());
            for (std::size_t i = 3; i + 2 < fields.size(); ++i) s.psnr.push_back(std::stod(fields[i]));
            const std::string tag = step_name(s.step);
            s.mask = read_mask_pgm(dir / ("mask_" + tag + ".pgm"), g);
            const fs::path erd_file = dir / ("erd_average_" + tag + ".f32");
            if (fs::exists(erd_file)) {
                ErdMap e;
                e.channels = out.erd_channels;
                e.average = read_plane_f32(erd_file, g.rows, g.cols);
                s.erd = std::move(e);
            }
            out.steps.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw ValidationError(dir.string() + "/config.json: " + e.what());
    } catch (const std::logic_error& e) {
        if (dynamic_cast<const ValidationError*>(&e)) throw;
        throw ValidationError(dir.string() + "/trace.csv: " + e.what());
    }
    if (out.steps.empty()) throw ValidationError(dir.string() + ": trace has no steps");
    return out;
}

}  // namespace dynsamp
