// Regressors mapping feature vectors to expected reduction in distortion:
// linear least squares and a fully connected ReLU network trained with Adam.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dynsamp/core.hpp"

namespace dynsamp {

// ---------------------------------------------------------------- least squares

struct LsModel {
    Eigen::VectorXd theta;  // feature weights, then the intercept when present
    bool intercept = true;

    [[nodiscard]] std::size_t feature_count() const {
        return static_cast<std::size_t>(theta.size()) - (intercept ? 1 : 0);
    }

    [[nodiscard]] Eigen::VectorXd predict(const Eigen::MatrixXd& features) const {
        const Eigen::Index f = static_cast<Eigen::Index>(feature_count());
        if (features.cols() != f) throw ValidationError("LS model: feature count mismatch");
        Eigen::VectorXd out = features * theta.head(f);
        if (intercept) out.array() += theta(f);
        return out;
    }
};

struct LsFitReport {
    bool ridge_used = false;
    double reciprocal_condition = 0.0;
    double residual_norm = 0.0;
};

struct LsFit {
    LsModel model;
    LsFitReport report;
};

inline constexpr double kRidgeLambda = 1e-8;

/// Normal equations on a column-scaled design, solved by LDLT. When the scaled
/// Gram matrix is numerically singular a ridge term kRidgeLambda·I is added
/// and the report flags it.
inline LsFit fit_ls(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, bool intercept = true) {
    if (features.rows() != targets.size()) throw ValidationError("fit_ls: one target per feature row required");
    if (features.rows() == 0) throw ValidationError("fit_ls: no training rows");
    if (!features.allFinite() || !targets.allFinite()) throw ValidationError("fit_ls: non-finite training data");
    const Eigen::Index f = features.cols();
    const Eigen::Index p = f + (intercept ? 1 : 0);
    Eigen::MatrixXd design(features.rows(), p);
    design.leftCols(f) = features;
    if (intercept) design.col(f).setOnes();

    Eigen::VectorXd scale(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double n = design.col(j).norm();
        scale(j) = n > 0.0 ? 1.0 / n : 1.0;
    }
    const Eigen::MatrixXd scaled = design * scale.asDiagonal();
    Eigen::MatrixXd gram = scaled.transpose() * scaled;
    const Eigen::VectorXd rhs = scaled.transpose() * targets;

    LsFit fit;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    const Eigen::VectorXd pivots = ldlt.vectorD().cwiseAbs();
    const double pivot_ratio = pivots.maxCoeff() > 0.0 ? pivots.minCoeff() / pivots.maxCoeff() : 0.0;
    fit.report.reciprocal_condition = std::min(ldlt.rcond(), pivot_ratio);
    if (ldlt.info() != Eigen::Success || !(fit.report.reciprocal_condition > 1e-12) ||
        features.rows() < p) {
        gram.diagonal().array() += kRidgeLambda;
        ldlt.compute(gram);
        fit.report.ridge_used = true;
    }
    const Eigen::VectorXd z = ldlt.solve(rhs);
    fit.model.theta = scale.asDiagonal() * z;
    fit.model.intercept = intercept;
    if (!fit.model.theta.allFinite()) throw RuntimeFailure("fit_ls: solution is not finite");
    fit.report.residual_norm = (design * fit.model.theta - targets).norm();
    return fit;
}

inline nlohmann::json to_json(const LsModel& m) {
    return {{"type", "ls"},
            {"intercept", m.intercept},
            {"theta", std::vector<double>(m.theta.data(), m.theta.data() + m.theta.size())}};
}

inline LsModel ls_model_from_json(const nlohmann::json& j) {
    if (j.at("type").get<std::string>() != "ls") throw ValidationError("not an LS model");
    LsModel m;
    m.intercept = j.at("intercept").get<bool>();
    const auto theta = j.at("theta").get<std::vector<double>>();
    if (theta.size() < (m.intercept ? 2u : 1u)) throw ValidationError("LS model: theta too short");
    m.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    if (!m.theta.allFinite()) throw ValidationError("LS model: non-finite weights");
    return m;
}

// ---------------------------------------------------------------- MLP

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;    // out
};

/// Fully connected network, ReLU on hidden layers and a linear scalar output.
/// Inputs are standardised with the stored training mean and scale.
struct MlpModel {
    std::vector<DenseLayer> layers;
    Eigen::VectorXd feature_mean;
    Eigen::VectorXd feature_scale;  // 1 / standard deviation

    [[nodiscard]] std::size_t input_size() const { return static_cast<std::size_t>(feature_mean.size()); }

    void validate() const {
        if (layers.empty()) throw ValidationError("MLP has no layers");
        Eigen::Index in = feature_mean.size();
        if (feature_scale.size() != in) throw ValidationError("MLP standardisation size mismatch");
        for (const auto& l : layers) {
            if (l.weight.cols() != in || l.bias.size() != l.weight.rows())
                throw ValidationError("MLP layer shapes are inconsistent");
            if (!l.weight.allFinite() || !l.bias.allFinite()) throw ValidationError("MLP has non-finite parameters");
            in = l.weight.rows();
        }
        if (in != 1) throw ValidationError("MLP output must be scalar");
    }

    [[nodiscard]] Eigen::MatrixXd standardise(const Eigen::MatrixXd& features) const {
        if (features.cols() != feature_mean.size()) throw ValidationError("MLP: feature count mismatch");
        return ((features.rowwise() - feature_mean.transpose()).array().rowwise() * feature_scale.transpose().array())
            .matrix();
    }

    /// Forward pass on already standardised rows; returns one value per row.
    [[nodiscard]] Eigen::VectorXd forward_standardised(const Eigen::MatrixXd& x) const {
        Eigen::MatrixXd a = x.transpose();  // features x batch
        for (std::size_t i = 0; i < layers.size(); ++i) {
            Eigen::MatrixXd z = layers[i].weight * a;
            z.colwise() += layers[i].bias;
            a = i + 1 < layers.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
        }
        return a.row(0).transpose();
    }

    [[nodiscard]] Eigen::VectorXd predict(const Eigen::MatrixXd& features) const {
        return forward_standardised(standardise(features));
    }
};

struct MlpOptions {
    std::vector<std::size_t> hidden = {50, 50, 50, 50, 50};
    std::size_t epochs = 500;
    double learning_rate = 1e-3;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
};

struct MlpFitReport {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::vector<double> epoch_loss;
};

struct MlpFit {
    MlpModel model;
    MlpFitReport report;
};

inline double mse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).squaredNorm() / double(a.size()); }

/// Adam (β1 0.9, β2 0.999, ε 1e-8) on mean squared error over shuffled
/// minibatches; He-uniform initialisation. Deterministic in `opts.seed`.
inline MlpFit fit_mlp(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, const MlpOptions& opts = {}) {
    if (features.rows() == 0 || features.rows() != targets.size())
        throw ValidationError("fit_mlp: need at least one training pair with one target per row");
    if (!features.allFinite() || !targets.allFinite()) throw ValidationError("fit_mlp: non-finite training data");
    if (!(opts.learning_rate > 0.0) || opts.batch_size == 0) throw ValidationError("fit_mlp: invalid options");
    const Eigen::Index n = features.rows();
    const Eigen::Index f = features.cols();

    MlpFit fit;
    MlpModel& m = fit.model;
    m.feature_mean = features.colwise().mean().transpose();
    m.feature_scale.resize(f);
    for (Eigen::Index j = 0; j < f; ++j) {
        const double var = (features.col(j).array() - m.feature_mean(j)).square().mean();
        m.feature_scale(j) = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
    }

    std::mt19937_64 rng(opts.seed);
    std::vector<std::size_t> dims{static_cast<std::size_t>(f)};
    dims.insert(dims.end(), opts.hidden.begin(), opts.hidden.end());
    dims.push_back(1);
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        DenseLayer l;
        const double limit = std::sqrt(6.0 / static_cast<double>(dims[i]));
        std::uniform_real_distribution<double> init(-limit, limit);
        l.weight.resize(static_cast<Eigen::Index>(dims[i + 1]), static_cast<Eigen::Index>(dims[i]));
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = init(rng);
        l.bias = Eigen::VectorXd::Zero(l.weight.rows());
        m.layers.push_back(std::move(l));
    }

    const Eigen::MatrixXd x = m.standardise(features);
    const std::size_t depth = m.layers.size();
    std::vector<DenseLayer> mom(depth), vel(depth);
    for (std::size_t i = 0; i < depth; ++i) {
        mom[i] = {Eigen::MatrixXd::Zero(m.layers[i].weight.rows(), m.layers[i].weight.cols()),
                  Eigen::VectorXd::Zero(m.layers[i].bias.size())};
        vel[i] = mom[i];
    }
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::uint64_t step = 0;

    fit.report.initial_loss = mse(m.forward_standardised(x), targets);
    if (!std::isfinite(fit.report.initial_loss)) throw RuntimeFailure("fit_mlp: initial loss is not finite");

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::vector<Eigen::MatrixXd> acts(depth + 1);
    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
            const std::size_t end = std::min(order.size(), start + opts.batch_size);
            const auto b = static_cast<Eigen::Index>(end - start);
            Eigen::MatrixXd a(f, b);
            Eigen::VectorXd y(b);
            for (Eigen::Index k = 0; k < b; ++k) {
                a.col(k) = x.row(order[start + static_cast<std::size_t>(k)]).transpose();
                y(k) = targets(order[start + static_cast<std::size_t>(k)]);
            }
            acts[0] = a;
            for (std::size_t i = 0; i < depth; ++i) {
                Eigen::MatrixXd z = m.layers[i].weight * acts[i];
                z.colwise() += m.layers[i].bias;
                acts[i + 1] = i + 1 < depth ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
            }
            // dL/d(output) for L = mean (out - y)^2
            Eigen::MatrixXd delta = (2.0 / static_cast<double>(b)) * (acts[depth].row(0).transpose() - y).transpose();
            ++step;
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (std::size_t i = depth; i-- > 0;) {
                const Eigen::MatrixXd gw = delta * acts[i].transpose();
                const Eigen::VectorXd gb = delta.rowwise().sum();
                if (i > 0) {
                    delta = (m.layers[i].weight.transpose() * delta).cwiseProduct(
                        (acts[i].array() > 0.0).cast<double>().matrix());
                }
                mom[i].weight = beta1 * mom[i].weight + (1.0 - beta1) * gw;
                vel[i].weight = beta2 * vel[i].weight + (1.0 - beta2) * gw.cwiseAbs2();
                mom[i].bias = beta1 * mom[i].bias + (1.0 - beta1) * gb;
                vel[i].bias = beta2 * vel[i].bias + (1.0 - beta2) * gb.cwiseAbs2();
                m.layers[i].weight.array() -= opts.learning_rate * (mom[i].weight.array() / c1) /
                                              ((vel[i].weight.array() / c2).sqrt() + eps);
                m.layers[i].bias.array() -= opts.learning_rate * (mom[i].bias.array() / c1) /
                                            ((vel[i].bias.array() / c2).sqrt() + eps);
            }
        }
        const double loss = mse(m.forward_standardised(x), targets);
        if (!std::isfinite(loss)) {
            throw RuntimeFailure("fit_mlp: loss became non-finite at epoch " + std::to_string(epoch + 1) +
                                 "; the learning rate is too high for the target scale");
        }
        fit.report.epoch_loss.push_back(loss);
    }
    fit.report.final_loss = fit.report.epoch_loss.empty() ? fit.report.initial_loss : fit.report.epoch_loss.back();
    return fit;
}

inline nlohmann::json to_json(const MlpModel& m) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : m.layers) {
        std::vector<double> w(static_cast<std::size_t>(l.weight.size()));
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(w.data(), l.weight.rows(),
                                                                                          l.weight.cols()) = l.weight;
        layers.push_back({{"in", l.weight.cols()},
                          {"out", l.weight.rows()},
                          {"weight", w},
                          {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
    }
    return {{"type", "mlp"},
            {"hidden_activation", "relu"},
            {"feature_mean", std::vector<double>(m.feature_mean.data(), m.feature_mean.data() + m.feature_mean.size())},
            {"feature_scale",
             std::vector<double>(m.feature_scale.data(), m.feature_scale.data() + m.feature_scale.size())},
            {"layers", layers}};
}

inline MlpModel mlp_model_from_json(const nlohmann::json& j) {
    if (j.at("type").get<std::string>() != "mlp") throw ValidationError("not an MLP model");
    MlpModel m;
    const auto mean = j.at("feature_mean").get<std::vector<double>>();
    const auto scale = j.at("feature_scale").get<std::vector<double>>();
    m.feature_mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    m.feature_scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));
    for (const auto& jl : j.at("layers")) {
        const auto in = jl.at("in").get<Eigen::Index>();
        const auto out = jl.at("out").get<Eigen::Index>();
        const auto w = jl.at("weight").get<std::vector<double>>();
        const auto b = jl.at("bias").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(w.size()) != in * out || static_cast<Eigen::Index>(b.size()) != out)
            throw ValidationError("MLP layer payload does not match its declared shape");
        DenseLayer l;
        l.weight = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(w.data(),
                                                                                                          out, in);
        l.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), out);
        m.layers.push_back(std::move(l));
    }
    m.validate();
    return m;
}

}  // namespace dynsamp
