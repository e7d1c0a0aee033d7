// File interchange: raw little-endian float32 planes, binary PGM masks, and
// sample directories (meta.json + one channel_<label>.f32 per channel).
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynsamp/core.hpp"
#include "dynsamp/ingest.hpp"
#include "dynsamp/rd.hpp"

namespace dynsamp {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace detail {

inline std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

}  // namespace detail

inline std::vector<char> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const fs::path& path, const void* data, std::size_t size) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write " + path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) throw RuntimeFailure("write failed: " + path.string());
}

inline std::vector<float> read_f32(const fs::path& path, std::size_t expected_count) {
    const auto bytes = read_bytes(path);
    if (bytes.size() != expected_count * 4) {
        throw ValidationError(path.string() + ": expected " + std::to_string(expected_count) + " float32 values, got " +
                              std::to_string(bytes.size()) + " bytes");
    }
    std::vector<float> out(expected_count);
    for (std::size_t i = 0; i < expected_count; ++i) {
        std::uint32_t raw = 0;
        std::memcpy(&raw, bytes.data() + 4 * i, 4);
        out[i] = std::bit_cast<float>(detail::to_le(raw));
    }
    return out;
}

inline void write_f32(const fs::path& path, std::span<const float> values) {
    std::vector<std::uint32_t> raw(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) raw[i] = detail::to_le(std::bit_cast<std::uint32_t>(values[i]));
    write_bytes(path, raw.data(), raw.size() * 4);
}

/// Row-major float32 plane.
inline void write_plane_f32(const fs::path& path, const Plane& plane) {
    std::vector<float> v(plane.size());
    for (std::size_t i = 0; i < plane.size(); ++i) v[i] = static_cast<float>(plane[i]);
    write_f32(path, v);
}

inline Plane read_plane_f32(const fs::path& path, std::size_t rows, std::size_t cols) {
    const auto v = read_f32(path, rows * cols);
    return Plane(rows, cols, std::vector<double>(v.begin(), v.end()));
}

/// Binary P5 PGM: 255 for measured cells, 0 otherwise.
inline void write_mask_pgm(const fs::path& path, const MeasurementMask& mask) {
    std::ostringstream header;
    header << "P5\n" << mask.grid().cols << ' ' << mask.grid().rows << "\n255\n";
    std::string data = header.str();
    for (auto b : mask.bits()) data.push_back(static_cast<char>(b ? 255 : 0));
    write_bytes(path, data.data(), data.size());
}

inline MeasurementMask read_mask_pgm(const fs::path& path, const GridSpec& grid) {
    const auto bytes = read_bytes(path);
    std::string text(bytes.begin(), bytes.end());
    std::istringstream in(text);
    std::string magic;
    std::size_t cols = 0, rows = 0, maxval = 0;
    in >> magic >> cols >> rows >> maxval;
    if (magic != "P5" || cols != grid.cols || rows != grid.rows || maxval != 255) {
        throw ValidationError(path.string() + ": not a P5 mask matching the grid");
    }
    in.get();
    const auto offset = static_cast<std::size_t>(in.tellg());
    if (bytes.size() != offset + grid.size()) throw ValidationError(path.string() + ": truncated mask");
    std::vector<std::uint8_t> bits(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) bits[i] = static_cast<unsigned char>(bytes[offset + i]) > 127;
    return MeasurementMask(grid, std::move(bits));
}

/// Shortest text that round-trips a channel label, e.g. "542.3231".
inline std::string format_label(double label) {
    std::ostringstream os;
    os << std::setprecision(10) << label;
    return os.str();
}

struct SampleDirectory {
    SampleMeta meta;
    ChannelStack stack;
    std::vector<double> ppm;
};

inline std::string channel_file_name(double label) { return "channel_" + format_label(label) + ".f32"; }

/// Load meta.json and the channel planes. Rows listed in "defective_rows" are
/// dropped before the grid is built; pixel pitch is FOV over the kept shape.
inline SampleDirectory load_sample(const fs::path& dir) {
    json meta;
    try {
        std::ifstream in(dir / "meta.json");
        if (!in) throw ValidationError("missing meta.json in " + dir.string());
        meta = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError(dir.string() + "/meta.json: " + e.what());
    }
    try {
        SampleDirectory out;
        out.meta.name = meta.value("name", dir.filename().string());
        out.meta.width_mm = meta.at("width_mm").get<double>();
        out.meta.height_mm = meta.at("height_mm").get<double>();
        out.meta.scan_rate_um_per_s = meta.at("scan_rate_um_per_s").get<double>();
        out.meta.acq_rate_spectra_per_s = meta.at("acq_rate_spectra_per_s").get<double>();
        out.meta.validate();
        const auto rows = meta.at("rows").get<std::size_t>();
        const auto cols = meta.at("cols").get<std::size_t>();
        std::vector<std::size_t> defective = meta.value("defective_rows", std::vector<std::size_t>{});
        std::vector<std::size_t> kept;
        for (std::size_t r = 0; r < rows; ++r)
            if (std::ranges::find(defective, r) == defective.end()) kept.push_back(r);
        if (kept.empty()) throw ValidationError("every row is flagged defective");
        const GridSpec grid(kept.size(), cols, out.meta.width_mm * 1000.0 / static_cast<double>(cols),
                            out.meta.height_mm * 1000.0 / static_cast<double>(kept.size()));
        std::vector<Plane> planes;
        std::vector<double> labels;
        for (const auto& ch : meta.at("channels")) {
            const double label = ch.at("label").get<double>();
            const std::string file = ch.value("file", channel_file_name(label));
            const Plane full = read_plane_f32(dir / file, rows, cols);
            Plane p(grid.rows, grid.cols);
            for (std::size_t i = 0; i < kept.size(); ++i)
                for (std::size_t c = 0; c < cols; ++c) p(i, c) = full(kept[i], c);
            planes.push_back(std::move(p));
            labels.push_back(label);
            out.ppm.push_back(ch.value("ppm", kDefaultPpm));
        }
        out.stack = ChannelStack(grid, std::move(planes), std::move(labels));
        return out;
    } catch (const json::exception& e) {
        throw ValidationError(dir.string() + "/meta.json: " + e.what());
    }
}

/// Write a sample directory. Physical FOV is derived from the grid pitch;
/// scan and acquisition rates default to one column per second at the
/// column pitch.
inline void save_sample(const fs::path& dir, const std::string& name, const ChannelStack& stack,
                        double scan_rate_um_per_s = 0.0, double acq_rate = 1.0) {
    fs::create_directories(dir);
    const GridSpec& g = stack.grid();
    if (scan_rate_um_per_s <= 0.0) scan_rate_um_per_s = g.pixel_width_um * acq_rate;
    json meta;
    meta["name"] = name;
    meta["width_mm"] = static_cast<double>(g.cols) * g.pixel_width_um / 1000.0;
    meta["height_mm"] = static_cast<double>(g.rows) * g.pixel_height_um / 1000.0;
    meta["scan_rate_um_per_s"] = scan_rate_um_per_s;
    meta["acq_rate_spectra_per_s"] = acq_rate;
    meta["rows"] = g.rows;
    meta["cols"] = g.cols;
    meta["channels"] = json::array();
    for (std::size_t z = 0; z < stack.channel_count(); ++z) {
        const double label = stack.labels()[z];
        meta["channels"].push_back({{"label", label}, {"ppm", kDefaultPpm}});
        write_plane_f32(dir / channel_file_name(label), stack.channel(z));
    }
    std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
}

inline json to_json(const RdParams& p) {
    return json{{"c", p.c}, {"window", window_to_string(p.window)}, {"channels", p.channels}};
}

inline RdParams rd_params_from_json(const json& j) {
    RdParams p;
    p.c = j.at("c").get<double>();
    p.window = parse_window(j.at("window").get<std::string>());
    p.channels = j.value("channels", std::vector<std::size_t>{});
    p.validate();
    return p;
}

/// RD planes as rd_<label>.f32 plus rd.json recording parameters.
inline void save_rd_map(const fs::path& dir, const RdMap& map, const RdParams& params,
                        std::span<const double> labels) {
    fs::create_directories(dir);
    json side = to_json(params);
    side["planes"] = json::array();
    for (std::size_t k = 0; k < map.channels.size(); ++k) {
        const std::string file = "rd_" + format_label(labels[map.channels[k]]) + ".f32";
        write_plane_f32(dir / file, map.per_channel[k]);
        side["planes"].push_back({{"channel", map.channels[k]}, {"file", file}});
    }
    write_plane_f32(dir / "rd_average.f32", map.average);
    side["average"] = "rd_average.f32";
    std::ofstream(dir / "rd.json") << side.dump(2) << '\n';
}

}  // namespace dynsamp
