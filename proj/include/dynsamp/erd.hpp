// Expected-RD estimators behind one interface, and the persisted model file
// that ties a trained regressor to its channel selection and RD parameters.
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dynsamp/features.hpp"
#include "dynsamp/io.hpp"
#include "dynsamp/models.hpp"
#include "dynsamp/rd.hpp"
#include "dynsamp/unet.hpp"

namespace dynsamp {

struct ErdMap {
    std::vector<std::size_t> channels;
    std::vector<Plane> per_channel;
    Plane average;
};

class ErdModel {
public:
    virtual ~ErdModel() = default;
    [[nodiscard]] virtual std::string name() const = 0;
    /// Channel selection fixed at training time; empty accepts any selection.
    [[nodiscard]] virtual std::vector<std::size_t> trained_channels() const { return {}; }
    /// One raw ERD plane per requested channel. Values at S are arbitrary.
    [[nodiscard]] virtual std::vector<Plane> predict(const Reconstruction& recon, const MeasuredValues& measured,
                                                     std::span<const std::size_t> channels) const = 0;
};

namespace detail {

inline Plane scatter(const GridSpec& g, const std::vector<std::size_t>& cells, const Eigen::VectorXd& values) {
    Plane p(g.rows, g.cols);
    for (std::size_t i = 0; i < cells.size(); ++i) p[cells[i]] = values(static_cast<Eigen::Index>(i));
    return p;
}

template <class Regressor>
std::vector<Plane> feature_predict(const Regressor& model, const Reconstruction& recon,
                                   std::span<const std::size_t> channels) {
    std::vector<Plane> out;
    if (recon.source_mask().unmeasured_count() == 0) {
        out.assign(channels.size(), Plane(recon.grid().rows, recon.grid().cols));
        return out;
    }
    const auto density = measurement_density(recon.source_mask());
    for (std::size_t z : channels) {
        const FeatureMatrix f = extract_features(recon, z, &density);
        out.push_back(scatter(recon.grid(), f.cells, model.predict(f.values)));
    }
    return out;
}

}  // namespace detail

class LsErd : public ErdModel {
public:
    explicit LsErd(LsModel model, std::vector<std::size_t> channels = {})
        : model_(std::move(model)), channels_(std::move(channels)) {
        if (model_.feature_count() != kFeatureCount) throw ValidationError("LS model does not use 6 features");
    }
    [[nodiscard]] std::string name() const override { return "ls"; }
    [[nodiscard]] std::vector<std::size_t> trained_channels() const override { return channels_; }
    [[nodiscard]] const LsModel& model() const { return model_; }
    [[nodiscard]] std::vector<Plane> predict(const Reconstruction& recon, const MeasuredValues&,
                                             std::span<const std::size_t> channels) const override {
        return detail::feature_predict(model_, recon, channels);
    }

private:
    LsModel model_;
    std::vector<std::size_t> channels_;
};

class MlpErd : public ErdModel {
public:
    explicit MlpErd(MlpModel model, std::vector<std::size_t> channels = {})
        : model_(std::move(model)), channels_(std::move(channels)) {
        model_.validate();
        if (model_.input_size() != kFeatureCount) throw ValidationError("MLP model does not take 6 features");
    }
    [[nodiscard]] std::string name() const override { return "mlp"; }
    [[nodiscard]] std::vector<std::size_t> trained_channels() const override { return channels_; }
    [[nodiscard]] const MlpModel& model() const { return model_; }
    [[nodiscard]] std::vector<Plane> predict(const Reconstruction& recon, const MeasuredValues&,
                                             std::span<const std::size_t> channels) const override {
        return detail::feature_predict(model_, recon, channels);
    }

private:
    MlpModel model_;
    std::vector<std::size_t> channels_;
};

/// The same network is applied to each channel independently.
class UNetErd : public ErdModel {
public:
    explicit UNetErd(std::shared_ptr<const UNetModel> model) : model_(std::move(model)) {}
    [[nodiscard]] std::string name() const override { return "unet"; }
    [[nodiscard]] std::vector<Plane> predict(const Reconstruction& recon, const MeasuredValues&,
                                             std::span<const std::size_t> channels) const override {
        std::vector<Plane> out;
        for (std::size_t z : channels) out.push_back(unet_infer(*model_, make_model_input(recon, z)));
        return out;
    }

private:
    std::shared_ptr<const UNetModel> model_;
};

/// Returns the exact RD computed against ground truth.
class ExactRdOracle : public ErdModel {
public:
    explicit ExactRdOracle(std::shared_ptr<const ChannelStack> truth) : truth_(std::move(truth)) {}
    [[nodiscard]] std::string name() const override { return "oracle"; }
    [[nodiscard]] std::vector<Plane> predict(const Reconstruction& recon, const MeasuredValues&,
                                             std::span<const std::size_t> channels) const override {
        return exact_rd(*truth_, recon, {channels.begin(), channels.end()}).per_channel;
    }

private:
    std::shared_ptr<const ChannelStack> truth_;
};

/// Returns the Gaussian-weighted RD approximation computed against ground truth.
class ApproxRdOracle : public ErdModel {
public:
    ApproxRdOracle(std::shared_ptr<const ChannelStack> truth, RdParams params)
        : truth_(std::move(truth)), params_(std::move(params)) {
        params_.validate();
    }
    [[nodiscard]] std::string name() const override { return "approx-oracle"; }
    [[nodiscard]] std::vector<Plane> predict(const Reconstruction& recon, const MeasuredValues&,
                                             std::span<const std::size_t> channels) const override {
        RdParams p = params_;
        p.channels.assign(channels.begin(), channels.end());
        return approx_rd(*truth_, recon, p).per_channel;
    }

private:
    std::shared_ptr<const ChannelStack> truth_;
    RdParams params_;
};

/// Run the model on channels Z (empty = all), zero every plane on S and
/// average over Z.
inline ErdMap erd_for(const ErdModel& model, const Reconstruction& recon, const MeasuredValues& measured,
                      std::vector<std::size_t> channels = {}) {
    const std::size_t d = recon.stack().channel_count();
    if (channels.empty()) {
        channels = model.trained_channels();
        if (channels.empty())
            for (std::size_t z = 0; z < d; ++z) channels.push_back(z);
    }
    const auto trained = model.trained_channels();
    if (!trained.empty() && trained != channels)
        throw ValidationError("erd_for: channel selection differs from the model's training configuration");
    for (std::size_t z : channels)
        if (z >= d) throw ValidationError("erd_for: channel index out of range for this sample");
    if (!(measured.mask() == recon.source_mask())) throw ValidationError("erd_for: mask mismatch");

    ErdMap out;
    out.channels = channels;
    out.per_channel = model.predict(recon, measured, channels);
    if (out.per_channel.size() != channels.size()) throw RuntimeFailure("erd_for: model returned wrong plane count");
    const MeasurementMask& mask = recon.source_mask();
    for (auto& p : out.per_channel) {
        if (p.rows() != recon.grid().rows || p.cols() != recon.grid().cols)
            throw RuntimeFailure("erd_for: model returned a plane of the wrong shape");
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (mask.measured(i)) p[i] = 0.0;
            else if (!std::isfinite(p[i])) throw RuntimeFailure(model.name() + " produced a non-finite ERD value");
        }
    }
    out.average = mean_plane(out.per_channel);
    return out;
}

// ---------------------------------------------------------------- model files

/// A trained LS or MLP regressor plus the channel selection and RD
/// parameters its training targets were generated with.
struct TrainedModel {
    std::variant<LsModel, MlpModel> model;
    std::vector<std::size_t> channels;
    RdParams rd;

    [[nodiscard]] std::string kind() const { return model.index() == 0 ? "ls" : "mlp"; }

    [[nodiscard]] std::unique_ptr<ErdModel> erd() const {
        if (const auto* ls = std::get_if<LsModel>(&model)) return std::make_unique<LsErd>(*ls, channels);
        return std::make_unique<MlpErd>(std::get<MlpModel>(model), channels);
    }
};

inline json to_json(const TrainedModel& t) {
    json j = std::visit([](const auto& m) { return to_json(m); }, t.model);
    j["channels"] = t.channels;
    j["rd"] = to_json(t.rd);
    return j;
}

inline TrainedModel trained_model_from_json(const json& j) {
    try {
        TrainedModel t;
        const auto type = j.at("type").get<std::string>();
        if (type == "ls") t.model = ls_model_from_json(j);
        else if (type == "mlp") t.model = mlp_model_from_json(j);
        else throw ValidationError("unknown model type '" + type + "'");
        t.channels = j.value("channels", std::vector<std::size_t>{});
        if (j.contains("rd")) t.rd = rd_params_from_json(j.at("rd"));
        return t;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("model file: ") + e.what());
    }
}

inline void save_trained_model(const fs::path& path, const TrainedModel& t) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw RuntimeFailure("cannot write " + path.string());
    out << to_json(t).dump(1) << '\n';
}

inline TrainedModel load_trained_model(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open model file " + path.string());
    try {
        return trained_model_from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

}  // namespace dynsamp
