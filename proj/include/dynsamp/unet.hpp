// U-Net inference (float32) and the weight interchange file.
//
// File layout: one line of compact UTF-8 JSON terminated by '\n', followed by
// the payload of concatenated little-endian float32 tensors. The header holds
// the architecture descriptor, a tensor manifest (name, shape, byte offset
// relative to the payload start), the payload size and a 64-bit FNV-1a
// checksum of the payload as 16 lowercase hex digits. Kernels are laid out
// [out, in, kh, kw] row-major, biases [out].
#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dynsamp/io.hpp"
#include "dynsamp/reconstruction.hpp"

namespace dynsamp {

inline std::uint64_t fnv1a64(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct UNetDescriptor {
    std::size_t depth = 4;  // resolution levels; depth - 1 poolings
    std::size_t base_filters = 32;
    std::size_t in_channels = 3;
    double leaky_slope = 0.2;

    void validate() const {
        if (depth < 1 || depth > 8) throw ValidationError("U-Net depth must be in [1, 8]");
        if (base_filters < 1) throw ValidationError("U-Net base filter count must be >= 1");
        if (in_channels < 1) throw ValidationError("U-Net needs at least one input plane");
    }
    [[nodiscard]] std::size_t filters(std::size_t level) const { return base_filters << level; }
    [[nodiscard]] std::size_t pad_multiple() const { return std::size_t{1} << (depth - 1); }
};

struct TensorShape {
    std::string name;
    std::vector<std::size_t> shape;

    [[nodiscard]] std::size_t count() const {
        std::size_t n = 1;
        for (auto s : shape) n *= s;
        return n;
    }
};

/// Every tensor the architecture requires, in canonical payload order.
inline std::vector<TensorShape> unet_tensor_layout(const UNetDescriptor& d) {
    d.validate();
    std::vector<TensorShape> out;
    auto conv = [&](const std::string& name, std::size_t o, std::size_t i, std::size_t k) {
        out.push_back({name + ".weight", {o, i, k, k}});
        out.push_back({name + ".bias", {o}});
    };
    std::size_t in = d.in_channels;
    for (std::size_t l = 0; l + 1 < d.depth; ++l) {
        const std::string p = "enc" + std::to_string(l);
        conv(p + ".conv1", d.filters(l), in, 3);
        conv(p + ".conv2", d.filters(l), d.filters(l), 3);
        in = d.filters(l);
    }
    conv("bottom.conv1", d.filters(d.depth - 1), in, 3);
    conv("bottom.conv2", d.filters(d.depth - 1), d.filters(d.depth - 1), 3);
    for (std::size_t l = d.depth - 1; l-- > 0;) {
        const std::string p = "dec" + std::to_string(l);
        conv(p + ".up", d.filters(l), d.filters(l + 1), 3);
        conv(p + ".conv1", d.filters(l), 2 * d.filters(l), 3);
        conv(p + ".conv2", d.filters(l), d.filters(l), 3);
    }
    conv("final", 1, d.filters(0), 1);
    return out;
}

/// Channels x height x width, float32.
struct Tensor3 {
    std::size_t c = 0, h = 0, w = 0;
    std::vector<float> data;

    Tensor3() = default;
    Tensor3(std::size_t c_, std::size_t h_, std::size_t w_) : c(c_), h(h_), w(w_), data(c_ * h_ * w_, 0.0f) {}
    float& at(std::size_t ch, std::size_t y, std::size_t x) { return data[(ch * h + y) * w + x]; }
    [[nodiscard]] float at(std::size_t ch, std::size_t y, std::size_t x) const { return data[(ch * h + y) * w + x]; }
};

class UNetModel {
public:
    using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    UNetModel(UNetDescriptor desc, std::map<std::string, std::vector<float>> tensors)
        : desc_(desc), tensors_(std::move(tensors)) {
        for (const auto& t : unet_tensor_layout(desc_)) {
            auto it = tensors_.find(t.name);
            if (it == tensors_.end()) throw ValidationError("U-Net weights: missing tensor " + t.name);
            if (it->second.size() != t.count()) throw ValidationError("U-Net weights: wrong size for " + t.name);
        }
        if (tensors_.size() != unet_tensor_layout(desc_).size())
            throw ValidationError("U-Net weights: unexpected extra tensors");
    }

    [[nodiscard]] const UNetDescriptor& descriptor() const { return desc_; }
    [[nodiscard]] const std::vector<float>& tensor(const std::string& name) const { return tensors_.at(name); }

    /// Full forward pass; input planes are padded to the pooling multiple and
    /// the single output plane is cropped back.
    [[nodiscard]] Tensor3 forward(const Tensor3& input) const {
        if (input.c != desc_.in_channels) throw ValidationError("U-Net input plane count mismatch");
        const std::size_t m = desc_.pad_multiple();
        const std::size_t ph = (input.h + m - 1) / m * m;
        const std::size_t pw = (input.w + m - 1) / m * m;
        const std::size_t top = (ph - input.h) / 2;
        const std::size_t left = (pw - input.w) / 2;
        Tensor3 x(input.c, ph, pw);
        for (std::size_t ch = 0; ch < input.c; ++ch)
            for (std::size_t y = 0; y < input.h; ++y)
                for (std::size_t xx = 0; xx < input.w; ++xx) x.at(ch, y + top, xx + left) = input.at(ch, y, xx);

        std::vector<Tensor3> skips;
        for (std::size_t l = 0; l + 1 < desc_.depth; ++l) {
            const std::string p = "enc" + std::to_string(l);
            x = leaky(conv(x, p + ".conv1"));
            x = leaky(conv(x, p + ".conv2"));
            skips.push_back(x);
            x = pool(x);
        }
        x = leaky(conv(x, "bottom.conv1"));
        x = leaky(conv(x, "bottom.conv2"));
        for (std::size_t l = desc_.depth - 1; l-- > 0;) {
            const std::string p = "dec" + std::to_string(l);
            x = relu(conv(upsample(x), p + ".up"));
            x = concat(x, skips[l]);
            x = relu(conv(x, p + ".conv1"));
            x = relu(conv(x, p + ".conv2"));
        }
        x = conv(x, "final");

        Tensor3 out(1, input.h, input.w);
        for (std::size_t y = 0; y < input.h; ++y)
            for (std::size_t xx = 0; xx < input.w; ++xx) out.at(0, y, xx) = x.at(0, y + top, xx + left);
        return out;
    }

private:
    // Same-size convolution with zero padding, via im2col and one GEMM.
    [[nodiscard]] Tensor3 conv(const Tensor3& in, const std::string& name) const {
        const auto& w = tensors_.at(name + ".weight");
        const auto& b = tensors_.at(name + ".bias");
        const std::size_t out_c = b.size();
        const std::size_t k = static_cast<std::size_t>(
            std::lround(std::sqrt(static_cast<double>(w.size() / (out_c * in.c)))));
        if (out_c * in.c * k * k != w.size()) throw ValidationError("U-Net: kernel shape mismatch at " + name);
        const auto half = static_cast<std::ptrdiff_t>(k / 2);
        const std::size_t hw = in.h * in.w;
        RowMatrixF cols(static_cast<Eigen::Index>(in.c * k * k), static_cast<Eigen::Index>(hw));
        for (std::size_t ch = 0; ch < in.c; ++ch) {
            for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t kx = 0; kx < k; ++kx) {
                    float* row = cols.row(static_cast<Eigen::Index>((ch * k + ky) * k + kx)).data();
                    for (std::size_t y = 0; y < in.h; ++y) {
                        const auto sy = static_cast<std::ptrdiff_t>(y) + static_cast<std::ptrdiff_t>(ky) - half;
                        for (std::size_t x = 0; x < in.w; ++x) {
                            const auto sx = static_cast<std::ptrdiff_t>(x) + static_cast<std::ptrdiff_t>(kx) - half;
                            const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<std::ptrdiff_t>(in.h) &&
                                                sx < static_cast<std::ptrdiff_t>(in.w);
                            row[y * in.w + x] = inside ? in.at(ch, static_cast<std::size_t>(sy),
                                                               static_cast<std::size_t>(sx))
                                                       : 0.0f;
                        }
                    }
                }
            }
        }
        const Eigen::Map<const RowMatrixF> kernel(w.data(), static_cast<Eigen::Index>(out_c),
                                                  static_cast<Eigen::Index>(in.c * k * k));
        Tensor3 out(out_c, in.h, in.w);
        Eigen::Map<RowMatrixF> result(out.data.data(), static_cast<Eigen::Index>(out_c),
                                      static_cast<Eigen::Index>(hw));
        result.noalias() = kernel * cols;
        for (std::size_t o = 0; o < out_c; ++o) result.row(static_cast<Eigen::Index>(o)).array() += b[o];
        return out;
    }

    [[nodiscard]] Tensor3 leaky(Tensor3 t) const {
        for (float& v : t.data) v = v < 0.0f ? v * static_cast<float>(desc_.leaky_slope) : v;
        return t;
    }
    static Tensor3 relu(Tensor3 t) {
        for (float& v : t.data) v = v < 0.0f ? 0.0f : v;
        return t;
    }
    static Tensor3 pool(const Tensor3& t) {
        Tensor3 out(t.c, t.h / 2, t.w / 2);
        for (std::size_t ch = 0; ch < t.c; ++ch)
            for (std::size_t y = 0; y < out.h; ++y)
                for (std::size_t x = 0; x < out.w; ++x)
                    out.at(ch, y, x) = std::max(std::max(t.at(ch, 2 * y, 2 * x), t.at(ch, 2 * y, 2 * x + 1)),
                                                std::max(t.at(ch, 2 * y + 1, 2 * x), t.at(ch, 2 * y + 1, 2 * x + 1)));
        return out;
    }
    static Tensor3 upsample(const Tensor3& t) {
        Tensor3 out(t.c, t.h * 2, t.w * 2);
        for (std::size_t ch = 0; ch < t.c; ++ch)
            for (std::size_t y = 0; y < out.h; ++y)
                for (std::size_t x = 0; x < out.w; ++x) out.at(ch, y, x) = t.at(ch, y / 2, x / 2);
        return out;
    }
    // Decoder planes first, then the skip connection.
    static Tensor3 concat(const Tensor3& a, const Tensor3& b) {
        Tensor3 out(a.c + b.c, a.h, a.w);
        std::copy(a.data.begin(), a.data.end(), out.data.begin());
        std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
        return out;
    }

    UNetDescriptor desc_;
    std::map<std::string, std::vector<float>> tensors_;
};

inline json unet_header(const UNetDescriptor& d) {
    json h;
    h["format"] = "dynsamp-unet";
    h["version"] = 1;
    h["depth"] = d.depth;
    h["base_filters"] = d.base_filters;
    h["in_channels"] = d.in_channels;
    h["out_channels"] = 1;
    h["encoder_activation"] = "leaky_relu";
    h["leaky_slope"] = d.leaky_slope;
    h["decoder_activation"] = "relu";
    h["upsample"] = "nearest";
    h["pool"] = "max2x2";
    h["final_activation"] = "linear";
    return h;
}

inline std::vector<char> serialize_unet(const UNetModel& model) {
    std::vector<char> payload;
    json manifest = json::array();
    for (const auto& t : unet_tensor_layout(model.descriptor())) {
        manifest.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", payload.size()}});
        for (float v : model.tensor(t.name)) {
            const std::uint32_t raw = detail::to_le(std::bit_cast<std::uint32_t>(v));
            const auto* p = reinterpret_cast<const char*>(&raw);
            payload.insert(payload.end(), p, p + 4);
        }
    }
    json h = unet_header(model.descriptor());
    h["tensors"] = manifest;
    h["payload_bytes"] = payload.size();
    h["checksum_fnv1a64"] = hex64(fnv1a64(payload.data(), payload.size()));
    const std::string head = h.dump() + "\n";
    std::vector<char> out(head.begin(), head.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

inline void save_unet(const fs::path& path, const UNetModel& model) {
    const auto bytes = serialize_unet(model);
    write_bytes(path, bytes.data(), bytes.size());
}

inline UNetModel parse_unet(const std::vector<char>& bytes, const std::string& origin = "U-Net weights") {
    const auto nl = std::find(bytes.begin(), bytes.end(), '\n');
    if (nl == bytes.end()) throw ValidationError(origin + ": missing header line");
    json h;
    try {
        h = json::parse(bytes.begin(), nl);
    } catch (const json::exception& e) {
        throw ValidationError(origin + ": bad header: " + e.what());
    }
    try {
        if (h.at("format").get<std::string>() != "dynsamp-unet" || h.at("version").get<int>() != 1)
            throw ValidationError(origin + ": unsupported format");
        UNetDescriptor d;
        d.depth = h.at("depth").get<std::size_t>();
        d.base_filters = h.at("base_filters").get<std::size_t>();
        d.in_channels = h.at("in_channels").get<std::size_t>();
        d.leaky_slope = h.at("leaky_slope").get<double>();
        d.validate();
        const json expect = unet_header(d);
        for (const char* key : {"out_channels", "encoder_activation", "decoder_activation", "upsample", "pool",
                                "final_activation"}) {
            if (h.at(key) != expect.at(key)) throw ValidationError(origin + ": unsupported " + std::string(key));
        }
        const std::size_t payload_start = static_cast<std::size_t>(nl - bytes.begin()) + 1;
        const std::size_t payload_size = bytes.size() - payload_start;
        if (h.at("payload_bytes").get<std::size_t>() != payload_size)
            throw ValidationError(origin + ": payload size differs from header");
        const char* payload = bytes.data() + payload_start;
        if (h.at("checksum_fnv1a64").get<std::string>() != hex64(fnv1a64(payload, payload_size)))
            throw ValidationError(origin + ": checksum mismatch");

        std::map<std::string, std::vector<float>> tensors;
        std::map<std::string, std::vector<std::size_t>> shapes;
        for (const auto& t : unet_tensor_layout(d)) shapes[t.name] = t.shape;
        for (const auto& entry : h.at("tensors")) {
            const auto name = entry.at("name").get<std::string>();
            const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
            const auto offset = entry.at("offset").get<std::size_t>();
            auto it = shapes.find(name);
            if (it == shapes.end()) throw ValidationError(origin + ": unexpected tensor " + name);
            if (it->second != shape) throw ValidationError(origin + ": shape mismatch for " + name);
            std::size_t count = 1;
            for (auto s : shape) count *= s;
            if (offset % 4 != 0 || offset + 4 * count > payload_size)
                throw ValidationError(origin + ": tensor " + name + " lies outside the payload");
            std::vector<float> v(count);
            for (std::size_t i = 0; i < count; ++i) {
                std::uint32_t raw = 0;
                std::memcpy(&raw, payload + offset + 4 * i, 4);
                v[i] = std::bit_cast<float>(detail::to_le(raw));
            }
            if (!tensors.emplace(name, std::move(v)).second) throw ValidationError(origin + ": duplicate " + name);
        }
        return UNetModel(d, std::move(tensors));
    } catch (const json::exception& e) {
        throw ValidationError(origin + ": bad header: " + e.what());
    }
}

inline UNetModel load_unet(const fs::path& path) { return parse_unet(read_bytes(path), path.string()); }

/// Per-channel network input: reconstruction on T, measured values on S,
/// and the indicator of S.
struct ModelInput {
    Plane reconstructed_t;
    Plane measured_s;
    Plane mask_s;

    [[nodiscard]] Tensor3 tensor() const {
        Tensor3 t(3, mask_s.rows(), mask_s.cols());
        const Plane* planes[3] = {&reconstructed_t, &measured_s, &mask_s};
        for (std::size_t p = 0; p < 3; ++p)
            for (std::size_t i = 0; i < mask_s.size(); ++i) t.data[p * mask_s.size() + i] = static_cast<float>((*planes[p])[i]);
        return t;
    }
};

inline ModelInput make_model_input(const Reconstruction& recon, std::size_t channel) {
    const GridSpec& g = recon.grid();
    const MeasurementMask& mask = recon.source_mask();
    ModelInput in{Plane(g.rows, g.cols), Plane(g.rows, g.cols), Plane(g.rows, g.cols)};
    const Plane& x = recon.channel(channel);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (mask.measured(i)) {
            in.measured_s[i] = x[i];
            in.mask_s[i] = 1.0;
        } else {
            in.reconstructed_t[i] = x[i];
        }
    }
    return in;
}

inline Plane unet_infer(const UNetModel& model, const ModelInput& input) {
    const Tensor3 out = model.forward(input.tensor());
    Plane p(out.h, out.w);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<double>(out.data[i]);
    return p;
}

/// Fixture bundle: fixtures.json naming the weight file and a list of
/// {rows, cols, input, output}; inputs hold 3 planes of float32, outputs one.
/// Returns the max-abs deviation of each fixture.
inline std::vector<double> check_fixture_bundle(const fs::path& dir) {
    json manifest;
    try {
        std::ifstream in(dir / "fixtures.json");
        if (!in) throw ValidationError("missing fixtures.json in " + dir.string());
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError(dir.string() + "/fixtures.json: " + e.what());
    }
    const UNetModel model = load_unet(dir / manifest.at("weights").get<std::string>());
    std::vector<double> deviations;
    for (const auto& f : manifest.at("fixtures")) {
        const auto rows = f.at("rows").get<std::size_t>();
        const auto cols = f.at("cols").get<std::size_t>();
        Tensor3 x(model.descriptor().in_channels, rows, cols);
        x.data = read_f32(dir / f.at("input").get<std::string>(), x.data.size());
        const auto expected = read_f32(dir / f.at("output").get<std::string>(), rows * cols);
        const Tensor3 y = model.forward(x);
        double worst = 0.0;
        for (std::size_t i = 0; i < expected.size(); ++i)
            worst = std::max(worst, std::abs(static_cast<double>(y.data[i]) - static_cast<double>(expected[i])));
        deviations.push_back(worst);
    }
    return deviations;
}

}  // namespace dynsamp
