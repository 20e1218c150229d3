#pragma once

// On-disk voxel encodings shared by the NIfTI and rawvol backends.
// Integer encodings are strict: a value that is not exactly representable
// raises a range error. Float32 rounds to nearest; float64 is exact.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "segqc/errors.hpp"
#include "segqc/volume.hpp"

namespace segqc {

enum class VoxelType : std::int16_t {
    u8 = 2,    // NIfTI DT_UINT8
    i16 = 4,   // DT_INT16
    f32 = 16,  // DT_FLOAT32
    f64 = 64,  // DT_FLOAT64
};

struct Encoding {
    VoxelType type = VoxelType::f32;
    Endian endian = Endian::little;
};

inline std::size_t voxel_type_size(VoxelType t) {
    switch (t) {
        case VoxelType::u8: return 1;
        case VoxelType::i16: return 2;
        case VoxelType::f32: return 4;
        case VoxelType::f64: return 8;
    }
    throw std::invalid_argument("unknown voxel type");
}

inline bool voxel_type_supported(std::int16_t code) {
    return code == 2 || code == 4 || code == 16 || code == 64;
}

namespace detail {

template <typename T>
T byteswap_value(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
        std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&v, bytes, sizeof(T));
    return v;
}

inline bool host_is_little() { return std::endian::native == std::endian::little; }

inline bool needs_swap(Endian file_endian) {
    return (file_endian == Endian::little) != host_is_little();
}

template <typename T>
T read_scalar(const unsigned char* p, bool swap) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return swap ? byteswap_value(v) : v;
}

template <typename T>
void write_scalar(unsigned char* p, T v, bool swap) {
    if (swap) v = byteswap_value(v);
    std::memcpy(p, &v, sizeof(T));
}

}  // namespace detail

/// Decode a raw voxel payload into doubles, applying slope/intercept.
inline std::vector<double> decode_voxels(const std::vector<unsigned char>& raw, VoxelType type,
                                         Endian endian, std::size_t count, double slope,
                                         double inter) {
    const std::size_t vs = voxel_type_size(type);
    if (raw.size() < count * vs)
        throw data_error("voxel payload shorter than declared dimensions require");
    const bool swap = detail::needs_swap(endian);
    const bool identity = slope == 1.0 && inter == 0.0;
    std::vector<double> out(count);
    const unsigned char* p = raw.data();
    for (std::size_t i = 0; i < count; ++i, p += vs) {
        double v = 0.0;
        switch (type) {
            case VoxelType::u8: v = static_cast<double>(*p); break;
            case VoxelType::i16: v = detail::read_scalar<std::int16_t>(p, swap); break;
            case VoxelType::f32: v = detail::read_scalar<float>(p, swap); break;
            case VoxelType::f64: v = detail::read_scalar<double>(p, swap); break;
        }
        out[i] = identity ? v : slope * v + inter;
    }
    return out;
}

/// Encode doubles into a raw voxel payload. Throws std::range_error when a
/// value cannot be represented by an integer target encoding.
inline std::vector<unsigned char> encode_voxels(const std::vector<double>& values,
                                                VoxelType type, Endian endian) {
    const std::size_t vs = voxel_type_size(type);
    const bool swap = detail::needs_swap(endian);
    std::vector<unsigned char> out(values.size() * vs);
    unsigned char* p = out.data();

    auto require_integral_in = [](double v, double lo, double hi, const char* name) {
        if (!std::isfinite(v) || v < lo || v > hi || std::nearbyint(v) != v)
            throw std::range_error("value " + std::to_string(v) +
                                   " not representable as " + name);
    };

    for (double v : values) {
        switch (type) {
            case VoxelType::u8:
                require_integral_in(v, 0.0, 255.0, "unsigned 8-bit");
                *p = static_cast<unsigned char>(v);
                break;
            case VoxelType::i16:
                require_integral_in(v, -32768.0, 32767.0, "signed 16-bit");
                detail::write_scalar<std::int16_t>(p, static_cast<std::int16_t>(v), swap);
                break;
            case VoxelType::f32:
                detail::write_scalar<float>(p, static_cast<float>(v), swap);
                break;
            case VoxelType::f64:
                detail::write_scalar<double>(p, v, swap);
                break;
        }
        p += vs;
    }
    return out;
}

}  // namespace segqc
