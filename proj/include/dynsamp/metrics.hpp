// Reconstruction quality: PSNR, percent-of-FOV milestones and the
// trapezoidal area under a PSNR curve.
#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "dynsamp/core.hpp"

namespace dynsamp {

/// Value substituted for an infinite PSNR (zero error) in reports and AUCs.
inline constexpr double kPsnrCap = 99.0;

/// 10·log10(peak² / MSE) with peak = max(truth); +inf when MSE is zero.
inline double psnr(const Plane& truth, const Plane& estimate) {
    if (truth.rows() != estimate.rows() || truth.cols() != estimate.cols())
        throw ValidationError("psnr: plane shapes differ");
    double mse = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double e = truth[i] - estimate[i];
        mse += e * e;
    }
    mse /= static_cast<double>(truth.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    const double peak = truth.max();
    if (!(peak > 0.0)) throw ValidationError("psnr: ground truth has no positive peak");
    return 10.0 * std::log10(peak * peak / mse);
}

inline double cap_psnr(double db) { return std::min(db, kPsnrCap); }

/// Capped PSNR that also accepts an all-zero truth: zero error caps, any other
/// error against a zero reference scores 0 dB.
inline double psnr_or_floor(const Plane& truth, const Plane& estimate) {
    if (truth.max() > 0.0) return cap_psnr(psnr(truth, estimate));
    for (std::size_t i = 0; i < truth.size(); ++i)
        if (truth[i] != estimate[i]) return 0.0;
    return kPsnrCap;
}

/// Percentage of the FOV measured.
inline double fov_percent(std::size_t measured, std::size_t total) {
    return 100.0 * static_cast<double>(measured) / static_cast<double>(total);
}

/// For each whole percent p = 1 .. floor(last), the first index whose
/// percentage reaches p. `percents` must be non-decreasing.
inline std::vector<std::size_t> milestone_indices(const std::vector<double>& percents) {
    std::vector<std::size_t> out;
    if (percents.empty()) return out;
    const auto last = static_cast<int>(std::floor(percents.back() + 1e-9));
    std::size_t i = 0;
    for (int p = 1; p <= last; ++p) {
        while (i < percents.size() && percents[i] + 1e-9 < static_cast<double>(p)) ++i;
        if (i == percents.size()) break;
        out.push_back(i);
    }
    return out;
}

/// Trapezoid rule with unit spacing between consecutive milestone values.
inline double trapezoid_auc(const std::vector<double>& values) {
    double area = 0.0;
    for (std::size_t i = 1; i < values.size(); ++i) area += 0.5 * (values[i - 1] + values[i]);
    return area;
}

}  // namespace dynsamp
