#pragma once

// Map-level QC quantities: averaging of stochastic forward-pass samples,
// per-voxel binary entropy, reconstruction error maps, lesion masking, and
// the voxel-wise sum aggregate.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "segqc/volume.hpp"

namespace segqc {

// N same-shape probability maps from repeated stochastic forward passes.
struct SampleStack {
    std::vector<ProbabilityMap> samples;

    void validate() const {
        if (samples.size() < 2)
            throw std::invalid_argument("SampleStack needs at least 2 samples, has " +
                                        std::to_string(samples.size()));
        for (std::size_t i = 1; i < samples.size(); ++i)
            require_shape_match(samples[0].shape, samples[i].shape, "SampleStack");
    }
};

/// Arithmetic mean of the stack, voxel by voxel.
inline ProbabilityMap mc_average(const SampleStack& stack) {
    stack.validate();
    const std::size_t n = stack.samples.size();
    ProbabilityMap out = make_volume(stack.samples[0].shape);
    for (std::size_t v = 0; v < out.voxels.size(); ++v) {
        double sum = 0.0;
        for (std::size_t s = 0; s < n; ++s) sum += stack.samples[s].voxels[v];
        out.voxels[v] = std::clamp(sum / static_cast<double>(n), 0.0, 1.0);
    }
    return out;
}

/// Binary entropy in bits. Exactly 0 at p in {0,1}; p is clamped to
/// [1e-12, 1-1e-12] before the logarithm elsewhere.
inline double binary_entropy(double p) {
    if (p == 0.0 || p == 1.0) return 0.0;
    constexpr double eps = 1e-12;
    const double pc = std::clamp(p, eps, 1.0 - eps);
    const double q = 1.0 - pc;
    const double h = -(pc * std::log2(pc) + q * std::log2(q));
    return std::clamp(h, 0.0, 1.0);
}

inline UncertaintyMap entropy_map(const ProbabilityMap& p) {
    require_probability(p, "entropy_map");
    UncertaintyMap out = make_volume(p.shape);
    for (std::size_t v = 0; v < p.voxels.size(); ++v)
        out.voxels[v] = binary_entropy(p.voxels[v]);
    return out;
}

/// Zeroes the image wherever the mask is true; used to build the
/// reconstruction input with lesion areas removed.
inline ScalarVolume mask_out_lesions(const ScalarVolume& image, const BinaryMask& mask) {
    require_shape_match(image.shape, mask.shape, "mask_out_lesions");
    ScalarVolume out = image;
    for (std::size_t v = 0; v < out.voxels.size(); ++v)
        if (mask.voxels[v]) out.voxels[v] = 0.0;
    return out;
}

/// Signed voxel-wise difference original - reconstructed.
inline ErrorMap error_map(const ScalarVolume& original, const ScalarVolume& reconstructed) {
    require_shape_match(original.shape, reconstructed.shape, "error_map");
    ErrorMap out = make_volume(original.shape);
    for (std::size_t v = 0; v < out.voxels.size(); ++v)
        out.voxels[v] = original.voxels[v] - reconstructed.voxels[v];
    return out;
}

inline ScalarVolume absolute_map(const ScalarVolume& v) {
    ScalarVolume out = v;
    for (double& x : out.voxels) x = std::fabs(x);
    return out;
}

/// Sum of all voxels with Neumaier compensation, so the aggregate stays
/// stable on 128^3 grids where millions of small terms accumulate.
inline double voxelwise_sum(const ScalarVolume& map) {
    double sum = 0.0;
    double comp = 0.0;
    for (double v : map.voxels) {
        const double t = sum + v;
        if (std::fabs(sum) >= std::fabs(v))
            comp += (sum - t) + v;
        else
            comp += (v - t) + sum;
        sum = t;
    }
    return sum + comp;
}

}  // namespace segqc
