#pragma once

// Minimal NIfTI-1 reader/writer: single-file "n+1" images, 348-byte header,
// datatypes 2/4/16/64, both endiannesses. Paired "ni1" files, compressed
// files, and orientation transforms are out of scope.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "segqc/encoding.hpp"
#include "segqc/volume.hpp"

namespace segqc {

namespace detail {

struct Nifti1Header {
    std::int32_t sizeof_hdr;     // must be 348
    char data_type[10];
    char db_name[18];
    std::int32_t extents;
    std::int16_t session_error;
    char regular;
    char dim_info;
    std::int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    std::int16_t intent_code;
    std::int16_t datatype;
    std::int16_t bitpix;
    std::int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    std::int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    std::int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    std::int16_t qform_code, sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4], srow_y[4], srow_z[4];
    char intent_name[16];
    char magic[4];
};
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must pack to 348 bytes");

inline void swap_header(Nifti1Header& h) {
    h.sizeof_hdr = byteswap_value(h.sizeof_hdr);
    h.extents = byteswap_value(h.extents);
    h.session_error = byteswap_value(h.session_error);
    for (auto& d : h.dim) d = byteswap_value(d);
    h.intent_p1 = byteswap_value(h.intent_p1);
    h.intent_p2 = byteswap_value(h.intent_p2);
    h.intent_p3 = byteswap_value(h.intent_p3);
    h.intent_code = byteswap_value(h.intent_code);
    h.datatype = byteswap_value(h.datatype);
    h.bitpix = byteswap_value(h.bitpix);
    h.slice_start = byteswap_value(h.slice_start);
    for (auto& d : h.pixdim) d = byteswap_value(d);
    h.vox_offset = byteswap_value(h.vox_offset);
    h.scl_slope = byteswap_value(h.scl_slope);
    h.scl_inter = byteswap_value(h.scl_inter);
    h.slice_end = byteswap_value(h.slice_end);
    h.cal_max = byteswap_value(h.cal_max);
    h.cal_min = byteswap_value(h.cal_min);
    h.slice_duration = byteswap_value(h.slice_duration);
    h.toffset = byteswap_value(h.toffset);
    h.glmax = byteswap_value(h.glmax);
    h.glmin = byteswap_value(h.glmin);
    h.qform_code = byteswap_value(h.qform_code);
    h.sform_code = byteswap_value(h.sform_code);
    h.quatern_b = byteswap_value(h.quatern_b);
    h.quatern_c = byteswap_value(h.quatern_c);
    h.quatern_d = byteswap_value(h.quatern_d);
    h.qoffset_x = byteswap_value(h.qoffset_x);
    h.qoffset_y = byteswap_value(h.qoffset_y);
    h.qoffset_z = byteswap_value(h.qoffset_z);
    for (auto& s : h.srow_x) s = byteswap_value(s);
    for (auto& s : h.srow_y) s = byteswap_value(s);
    for (auto& s : h.srow_z) s = byteswap_value(s);
}

}  // namespace detail

inline ScalarVolume read_nifti(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open NIfTI file: " + path.string());

    detail::Nifti1Header hdr{};
    if (!in.read(reinterpret_cast<char*>(&hdr), sizeof(hdr)))
        throw data_error("truncated NIfTI file (header shorter than 348 bytes): " +
                         path.string());

    // Endianness is signalled by whether sizeof_hdr reads as 348 natively.
    bool swapped = false;
    if (hdr.sizeof_hdr != 348) {
        if (detail::byteswap_value(hdr.sizeof_hdr) != 348)
            throw data_error("not a NIfTI-1 file (sizeof_hdr is not 348 in either byte "
                             "order): " + path.string());
        swapped = true;
        detail::swap_header(hdr);
    }

    if (std::memcmp(hdr.magic, "ni1\0", 4) == 0)
        throw data_error("paired NIfTI files (magic \"ni1\") are not supported: " +
                         path.string());
    if (std::memcmp(hdr.magic, "n+1\0", 4) != 0)
        throw data_error("bad NIfTI magic: " + path.string());

    if (hdr.dim[0] != 3 && !(hdr.dim[0] == 4 && hdr.dim[4] == 1))
        throw data_error("unsupported NIfTI dimensionality dim[0]=" +
                         std::to_string(hdr.dim[0]) + " (need 3, or 4 with dim[4]=1): " +
                         path.string());
    if (hdr.dim[1] < 1 || hdr.dim[2] < 1 || hdr.dim[3] < 1)
        throw data_error("non-positive NIfTI dimensions: " + path.string());
    if (!voxel_type_supported(hdr.datatype))
        throw data_error("unsupported NIfTI datatype code " + std::to_string(hdr.datatype) +
                         ": " + path.string());

    const auto vox_offset = static_cast<std::int64_t>(hdr.vox_offset);
    if (vox_offset < 352)
        throw data_error("invalid vox_offset " + std::to_string(vox_offset) +
                         " (single-file NIfTI needs >= 352): " + path.string());

    GridShape shape{static_cast<std::size_t>(hdr.dim[1]), static_cast<std::size_t>(hdr.dim[2]),
                    static_cast<std::size_t>(hdr.dim[3])};
    const auto type = static_cast<VoxelType>(hdr.datatype);
    const std::size_t payload = shape.voxel_count() * voxel_type_size(type);

    in.seekg(0, std::ios::end);
    const auto file_size = static_cast<std::int64_t>(in.tellg());
    if (file_size < vox_offset + static_cast<std::int64_t>(payload))
        throw data_error("declared dims need " + std::to_string(payload) +
                         " payload bytes but file has " +
                         std::to_string(file_size - vox_offset) + ": " + path.string());

    in.seekg(vox_offset, std::ios::beg);
    std::vector<unsigned char> raw(payload);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(payload)))
        throw data_error("truncated NIfTI voxel payload: " + path.string());

    double slope = hdr.scl_slope;
    double inter = hdr.scl_inter;
    if (slope == 0.0f || !std::isfinite(slope)) {
        slope = 1.0;
        inter = 0.0;
    }

    ScalarVolume vol;
    vol.shape = shape;
    const Endian file_endian =
        (swapped == detail::host_is_little()) ? Endian::big : Endian::little;
    vol.voxels = decode_voxels(raw, type, file_endian, shape.voxel_count(), slope, inter);
    vol.meta.source_datatype = hdr.datatype;
    vol.meta.scl_slope = slope;
    vol.meta.scl_inter = inter;
    vol.meta.source_endian = file_endian;
    if (hdr.pixdim[1] > 0 && hdr.pixdim[2] > 0 && hdr.pixdim[3] > 0)
        vol.meta.voxel_size_mm = {{hdr.pixdim[1], hdr.pixdim[2], hdr.pixdim[3]}};

    require_finite(vol, "NIfTI load of " + path.string());
    return vol;
}

inline void write_nifti(const std::filesystem::path& path, const ScalarVolume& vol,
                        Encoding enc) {
    detail::Nifti1Header hdr{};
    std::memset(&hdr, 0, sizeof(hdr));
    hdr.sizeof_hdr = 348;
    hdr.regular = 'r';
    hdr.dim[0] = 3;
    hdr.dim[1] = static_cast<std::int16_t>(vol.shape.nx);
    hdr.dim[2] = static_cast<std::int16_t>(vol.shape.ny);
    hdr.dim[3] = static_cast<std::int16_t>(vol.shape.nz);
    hdr.dim[4] = hdr.dim[5] = hdr.dim[6] = hdr.dim[7] = 1;
    if (vol.shape.nx > 32767 || vol.shape.ny > 32767 || vol.shape.nz > 32767)
        throw std::invalid_argument("volume too large for NIfTI-1 int16 dims");
    hdr.datatype = static_cast<std::int16_t>(enc.type);
    hdr.bitpix = static_cast<std::int16_t>(8 * voxel_type_size(enc.type));
    hdr.pixdim[0] = 1.0f;
    if (vol.meta.voxel_size_mm) {
        hdr.pixdim[1] = static_cast<float>((*vol.meta.voxel_size_mm)[0]);
        hdr.pixdim[2] = static_cast<float>((*vol.meta.voxel_size_mm)[1]);
        hdr.pixdim[3] = static_cast<float>((*vol.meta.voxel_size_mm)[2]);
    } else {
        hdr.pixdim[1] = hdr.pixdim[2] = hdr.pixdim[3] = 1.0f;
    }
    hdr.vox_offset = 352.0f;
    hdr.scl_slope = 1.0f;
    hdr.scl_inter = 0.0f;
    std::memcpy(hdr.magic, "n+1\0", 4);

    std::vector<unsigned char> payload = encode_voxels(vol.voxels, enc.type, enc.endian);

    if (detail::needs_swap(enc.endian)) detail::swap_header(hdr);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(&hdr), sizeof(hdr));
    const char extender[4] = {0, 0, 0, 0};
    out.write(extender, 4);
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    if (!out) throw data_error("write failed: " + path.string());
}

inline void write_nifti(const std::filesystem::path& path, const BinaryMask& mask,
                        Endian endian = Endian::little) {
    ScalarVolume v = make_volume(mask.shape);
    for (std::size_t i = 0; i < mask.voxels.size(); ++i)
        v.voxels[i] = mask.voxels[i] ? 1.0 : 0.0;
    write_nifti(path, v, Encoding{VoxelType::u8, endian});
}

}  // namespace segqc
