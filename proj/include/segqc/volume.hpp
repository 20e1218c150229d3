#pragma once

// Dense 3D voxel grids with x-fastest storage order, matching the NIfTI
// on-disk layout. All volume types are immutable-by-convention value types;
// operations elsewhere in the library return new volumes.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "segqc/errors.hpp"

namespace segqc {

struct GridShape {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t nz = 0;

    std::size_t voxel_count() const { return nx * ny * nz; }
    bool operator==(const GridShape&) const = default;

    std::string str() const {
        return std::to_string(nx) + "x" + std::to_string(ny) + "x" + std::to_string(nz);
    }
};

enum class Endian { little, big };

// Source-file metadata carried alongside voxel data. Populated by the
// readers; defaulted for volumes built in memory.
struct VolumeMeta {
    std::optional<std::array<double, 3>> voxel_size_mm;
    std::int16_t source_datatype = 0;
    double scl_slope = 1.0;  // already applied to voxel values on load
    double scl_inter = 0.0;
    Endian source_endian = Endian::little;
};

struct ScalarVolume {
    GridShape shape;
    std::vector<double> voxels;  // x-fastest: index = x + nx*(y + ny*z)
    VolumeMeta meta;

    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
        return x + shape.nx * (y + shape.ny * z);
    }
    double at(std::size_t x, std::size_t y, std::size_t z) const {
        return voxels[index(x, y, z)];
    }
    double& at(std::size_t x, std::size_t y, std::size_t z) {
        return voxels[index(x, y, z)];
    }
};

// Voxel values restricted to [0,1]; same layout as ScalarVolume.
using ProbabilityMap = ScalarVolume;
// Per-voxel binary entropy in bits, range [0,1].
using UncertaintyMap = ScalarVolume;
// Signed voxel-wise difference map.
using ErrorMap = ScalarVolume;

struct BinaryMask {
    GridShape shape;
    std::vector<std::uint8_t> voxels;  // 0 or 1, x-fastest

    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
        return x + shape.nx * (y + shape.ny * z);
    }
    bool at(std::size_t x, std::size_t y, std::size_t z) const {
        return voxels[index(x, y, z)] != 0;
    }
    void set(std::size_t x, std::size_t y, std::size_t z, bool v) {
        voxels[index(x, y, z)] = v ? 1 : 0;
    }
    std::size_t true_count() const {
        std::size_t n = 0;
        for (std::uint8_t v : voxels) n += (v != 0);
        return n;
    }
};

inline ScalarVolume make_volume(GridShape shape, double fill = 0.0) {
    if (shape.voxel_count() == 0)
        throw std::invalid_argument("volume shape must have at least one voxel per axis");
    ScalarVolume v;
    v.shape = shape;
    v.voxels.assign(shape.voxel_count(), fill);
    return v;
}

inline BinaryMask make_mask(GridShape shape, bool fill = false) {
    if (shape.voxel_count() == 0)
        throw std::invalid_argument("mask shape must have at least one voxel per axis");
    BinaryMask m;
    m.shape = shape;
    m.voxels.assign(shape.voxel_count(), fill ? 1 : 0);
    return m;
}

inline void require_shape_match(const GridShape& a, const GridShape& b, const char* where) {
    if (!(a == b))
        throw std::invalid_argument(std::string(where) + ": shape mismatch (" + a.str() +
                                    " vs " + b.str() + ")");
}

inline void require_finite(const ScalarVolume& v, const std::string& context) {
    for (std::size_t i = 0; i < v.voxels.size(); ++i) {
        if (!std::isfinite(v.voxels[i]))
            throw data_error(context + ": non-finite voxel value at flat index " +
                             std::to_string(i));
    }
}

inline void require_probability(const ScalarVolume& v, const char* where) {
    for (std::size_t i = 0; i < v.voxels.size(); ++i) {
        const double p = v.voxels[i];
        if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument(std::string(where) + ": voxel value " +
                                        std::to_string(p) + " outside [0,1] at flat index " +
                                        std::to_string(i));
    }
}

}  // namespace segqc
