#pragma once

// Intensity normalisation, background cropping, grid resampling and
// probability thresholding used to bring volumes onto a uniform footing
// before any QC math runs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

#include "segqc/volume.hpp"

namespace segqc {

/// Linear map of the volume's intensity range onto [lo, hi].
/// A constant volume maps to all-lo rather than failing.
inline ScalarVolume normalize_intensities(const ScalarVolume& v, double lo = 0.0,
                                          double hi = 255.0) {
    if (!(hi > lo)) throw std::invalid_argument("normalize_intensities: hi must exceed lo");
    const auto [mn_it, mx_it] = std::minmax_element(v.voxels.begin(), v.voxels.end());
    const double mn = *mn_it, mx = *mx_it;
    ScalarVolume out = v;
    if (mx == mn) {
        std::fill(out.voxels.begin(), out.voxels.end(), lo);
        return out;
    }
    const double scale = (hi - lo) / (mx - mn);
    for (double& x : out.voxels) x = lo + (x - mn) * scale;
    return out;
}

struct AxisRange {
    std::size_t lo = 0;
    std::size_t hi = 0;  // inclusive
    bool operator==(const AxisRange&) const = default;
};

struct BoundingBox {
    AxisRange x, y, z;
    bool operator==(const BoundingBox&) const = default;
};

struct CropResult {
    ScalarVolume volume;
    BoundingBox box;
};

/// Tight axis-aligned bounding box of voxels strictly above `threshold`,
/// plus the volume cropped to it.
inline CropResult crop_to_foreground(const ScalarVolume& v, double threshold) {
    const GridShape& s = v.shape;
    std::size_t x_lo = s.nx, x_hi = 0, y_lo = s.ny, y_hi = 0, z_lo = s.nz, z_hi = 0;
    bool any = false;
    for (std::size_t z = 0; z < s.nz; ++z)
        for (std::size_t y = 0; y < s.ny; ++y)
            for (std::size_t x = 0; x < s.nx; ++x)
                if (v.at(x, y, z) > threshold) {
                    any = true;
                    x_lo = std::min(x_lo, x); x_hi = std::max(x_hi, x);
                    y_lo = std::min(y_lo, y); y_hi = std::max(y_hi, y);
                    z_lo = std::min(z_lo, z); z_hi = std::max(z_hi, z);
                }
    if (!any)
        throw data_error("crop_to_foreground: no voxel above threshold " +
                         std::to_string(threshold));

    CropResult r;
    r.box = BoundingBox{{x_lo, x_hi}, {y_lo, y_hi}, {z_lo, z_hi}};
    GridShape cs{x_hi - x_lo + 1, y_hi - y_lo + 1, z_hi - z_lo + 1};
    r.volume = make_volume(cs);
    r.volume.meta = v.meta;
    for (std::size_t z = 0; z < cs.nz; ++z)
        for (std::size_t y = 0; y < cs.ny; ++y)
            for (std::size_t x = 0; x < cs.nx; ++x)
                r.volume.at(x, y, z) = v.at(x + x_lo, y + y_lo, z + z_lo);
    return r;
}

enum class ResampleMode { nearest, trilinear };

namespace detail {

// Corner-aligned coordinate mapping: target sample t lands at source
// position t*(n_src-1)/(n_dst-1); a single-sample target axis reads the
// low corner. Identity shapes therefore resolve to exact integer lookups.
inline double source_position(std::size_t t, std::size_t n_src, std::size_t n_dst) {
    if (n_dst <= 1 || n_src <= 1) return 0.0;
    return static_cast<double>(t) * static_cast<double>(n_src - 1) /
           static_cast<double>(n_dst - 1);
}

inline std::size_t nearest_index(double pos, std::size_t n) {
    const auto i = static_cast<long long>(std::llround(pos));
    return static_cast<std::size_t>(std::clamp<long long>(i, 0, static_cast<long long>(n) - 1));
}

}  // namespace detail

inline ScalarVolume resample_to_shape(const ScalarVolume& v, GridShape target,
                                      ResampleMode mode) {
    if (target.voxel_count() == 0)
        throw std::invalid_argument("resample_to_shape: empty target shape");
    ScalarVolume out = make_volume(target);
    out.meta = v.meta;
    const GridShape& s = v.shape;
    for (std::size_t z = 0; z < target.nz; ++z) {
        const double pz = detail::source_position(z, s.nz, target.nz);
        for (std::size_t y = 0; y < target.ny; ++y) {
            const double py = detail::source_position(y, s.ny, target.ny);
            for (std::size_t x = 0; x < target.nx; ++x) {
                const double px = detail::source_position(x, s.nx, target.nx);
                if (mode == ResampleMode::nearest) {
                    out.at(x, y, z) = v.at(detail::nearest_index(px, s.nx),
                                           detail::nearest_index(py, s.ny),
                                           detail::nearest_index(pz, s.nz));
                    continue;
                }
                const std::size_t x0 = std::min(static_cast<std::size_t>(px), s.nx - 1);
                const std::size_t y0 = std::min(static_cast<std::size_t>(py), s.ny - 1);
                const std::size_t z0 = std::min(static_cast<std::size_t>(pz), s.nz - 1);
                const std::size_t x1 = std::min(x0 + 1, s.nx - 1);
                const std::size_t y1 = std::min(y0 + 1, s.ny - 1);
                const std::size_t z1 = std::min(z0 + 1, s.nz - 1);
                const double fx = px - static_cast<double>(x0);
                const double fy = py - static_cast<double>(y0);
                const double fz = pz - static_cast<double>(z0);

                const double c00 = v.at(x0, y0, z0) * (1 - fx) + v.at(x1, y0, z0) * fx;
                const double c10 = v.at(x0, y1, z0) * (1 - fx) + v.at(x1, y1, z0) * fx;
                const double c01 = v.at(x0, y0, z1) * (1 - fx) + v.at(x1, y0, z1) * fx;
                const double c11 = v.at(x0, y1, z1) * (1 - fx) + v.at(x1, y1, z1) * fx;
                const double c0 = c00 * (1 - fy) + c10 * fy;
                const double c1 = c01 * (1 - fy) + c11 * fy;
                out.at(x, y, z) = c0 * (1 - fz) + c1 * fz;
            }
        }
    }
    return out;
}

/// Masks and label data resample with nearest-neighbour lookups only.
inline BinaryMask resample_to_shape(const BinaryMask& m, GridShape target) {
    if (target.voxel_count() == 0)
        throw std::invalid_argument("resample_to_shape: empty target shape");
    BinaryMask out = make_mask(target);
    const GridShape& s = m.shape;
    for (std::size_t z = 0; z < target.nz; ++z) {
        const double pz = detail::source_position(z, s.nz, target.nz);
        for (std::size_t y = 0; y < target.ny; ++y) {
            const double py = detail::source_position(y, s.ny, target.ny);
            for (std::size_t x = 0; x < target.nx; ++x) {
                const double px = detail::source_position(x, s.nx, target.nx);
                out.set(x, y, z, m.at(detail::nearest_index(px, s.nx),
                                      detail::nearest_index(py, s.ny),
                                      detail::nearest_index(pz, s.nz)));
            }
        }
    }
    return out;
}

/// Voxel is labelled true iff its probability strictly exceeds t.
inline BinaryMask binarize(const ProbabilityMap& p, double t = 0.5) {
    if (!(t >= 0.0 && t <= 1.0))
        throw std::invalid_argument("binarize: threshold must lie in [0,1]");
    BinaryMask m = make_mask(p.shape);
    for (std::size_t i = 0; i < p.voxels.size(); ++i) m.voxels[i] = p.voxels[i] > t ? 1 : 0;
    return m;
}

}  // namespace segqc
