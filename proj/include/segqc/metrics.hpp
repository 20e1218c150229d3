#pragma once

// Scalar quality metrics: Dice overlap, global SSIM components, Pearson
// correlation, mean absolute error, and precision/recall over failure
// labels.

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "segqc/volume.hpp"

namespace segqc {

/// Dice overlap 2|a&b| / (|a|+|b|). Two empty masks count as perfect
/// agreement (1.0).
inline double dice_coefficient(const BinaryMask& a, const BinaryMask& b) {
    require_shape_match(a.shape, b.shape, "dice_coefficient");
    std::size_t ca = 0, cb = 0, inter = 0;
    for (std::size_t i = 0; i < a.voxels.size(); ++i) {
        const bool va = a.voxels[i] != 0, vb = b.voxels[i] != 0;
        ca += va;
        cb += vb;
        inter += (va && vb);
    }
    if (ca + cb == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(ca + cb);
}

inline double dice_loss(const BinaryMask& a, const BinaryMask& b) {
    return 1.0 - dice_coefficient(a, b);
}

// The contrast term and the constants come in two flavours: the literal
// form used throughout this toolkit (linear constants, covariance in the
// contrast numerator) and the conventional SSIM form (squared constants,
// 2*sigma_x*sigma_y numerator).
enum class SsimConvention { literal, standard };

struct SSIMComponents {
    double luminance = 0.0;
    double contrast = 0.0;
    double structure = 0.0;
    double ssim = 0.0;
    double ssim_loss = 0.0;
};

/// Global (whole-volume) SSIM from population means, variances and
/// covariance. L is the dynamic range of the pre-scaled inputs.
inline SSIMComponents ssim_components(const ScalarVolume& x, const ScalarVolume& y,
                                      double L = 1.0,
                                      SsimConvention convention = SsimConvention::literal) {
    require_shape_match(x.shape, y.shape, "ssim_components");
    const std::size_t n = x.voxels.size();
    const double nd = static_cast<double>(n);

    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += x.voxels[i];
        sy += y.voxels[i];
    }
    const double mu_x = sx / nd, mu_y = sy / nd;

    double vxx = 0.0, vyy = 0.0, vxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x.voxels[i] - mu_x;
        const double dy = y.voxels[i] - mu_y;
        vxx += dx * dx;
        vyy += dy * dy;
        vxy += dx * dy;
    }
    const double var_x = vxx / nd, var_y = vyy / nd, cov = vxy / nd;
    const double sigma_x = std::sqrt(var_x), sigma_y = std::sqrt(var_y);

    double c1, c2;
    if (convention == SsimConvention::literal) {
        c1 = 0.01 * L;
        c2 = 0.03 * L;
    } else {
        c1 = (0.01 * L) * (0.01 * L);
        c2 = (0.03 * L) * (0.03 * L);
    }
    const double c3 = c2 / 2.0;

    SSIMComponents r;
    r.luminance = (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1);
    if (convention == SsimConvention::literal)
        r.contrast = (2.0 * cov + c2) / (var_x + var_y + c2);
    else
        r.contrast = (2.0 * sigma_x * sigma_y + c2) / (var_x + var_y + c2);
    r.structure = (cov + c3) / (sigma_x * sigma_y + c3);
    r.ssim = r.luminance * r.contrast * r.structure;
    r.ssim_loss = 1.0 - r.ssim;
    return r;
}

/// Product-moment correlation of two equal-length sequences.
inline double pearson_r(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size())
        throw std::invalid_argument("pearson_r: length mismatch");
    if (xs.size() < 3)
        throw degenerate_error("pearson_r: need at least 3 points, have " +
                               std::to_string(xs.size()));
    const double n = static_cast<double>(xs.size());
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
    }
    const double mx = sx / n, my = sy / n;
    double vxx = 0.0, vyy = 0.0, vxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        vxx += dx * dx;
        vyy += dy * dy;
        vxy += dx * dy;
    }
    if (vxx == 0.0 || vyy == 0.0)
        throw degenerate_error("pearson_r: zero variance input");
    return vxy / (std::sqrt(vxx) * std::sqrt(vyy));
}

inline double mae(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("mae: length mismatch");
    if (xs.empty()) throw std::invalid_argument("mae: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) s += std::fabs(xs[i] - ys[i]);
    return s / static_cast<double>(xs.size());
}

enum class PositiveClass { fail, pass };

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::size_t total() const { return tp + fp + fn + tn; }
    bool operator==(const ConfusionCounts&) const = default;
};

struct PrecisionRecall {
    std::optional<double> precision;  // empty when no predicted positives
    std::optional<double> recall;     // empty when no true positives
    ConfusionCounts counts;
};

/// Precision and recall of predicted failure labels against true failure
/// labels, with a selectable positive class. Undefined ratios stay empty
/// rather than being coerced to 0 or 1.
inline PrecisionRecall precision_recall(const std::vector<bool>& predicted_fail,
                                        const std::vector<bool>& true_fail,
                                        PositiveClass positive = PositiveClass::fail) {
    if (predicted_fail.size() != true_fail.size())
        throw std::invalid_argument("precision_recall: length mismatch");
    if (predicted_fail.empty())
        throw std::invalid_argument("precision_recall: empty input");
    PrecisionRecall r;
    for (std::size_t i = 0; i < predicted_fail.size(); ++i) {
        const bool pred = positive == PositiveClass::fail ? predicted_fail[i] : !predicted_fail[i];
        const bool truth = positive == PositiveClass::fail ? true_fail[i] : !true_fail[i];
        if (pred && truth) ++r.counts.tp;
        else if (pred && !truth) ++r.counts.fp;
        else if (!pred && truth) ++r.counts.fn;
        else ++r.counts.tn;
    }
    if (r.counts.tp + r.counts.fp > 0)
        r.precision = static_cast<double>(r.counts.tp) /
                      static_cast<double>(r.counts.tp + r.counts.fp);
    if (r.counts.tp + r.counts.fn > 0)
        r.recall = static_cast<double>(r.counts.tp) /
                   static_cast<double>(r.counts.tp + r.counts.fn);
    return r;
}

}  // namespace segqc
