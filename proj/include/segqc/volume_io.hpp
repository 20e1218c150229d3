#pragma once

// Extension-dispatched volume I/O: ".nii" selects the NIfTI-1 subset,
// ".rvol"/".rvol.json" the rawvol format.

#include <filesystem>
#include <string>

#include "segqc/nifti.hpp"
#include "segqc/rawvol.hpp"

namespace segqc {

inline ScalarVolume load_volume(const std::filesystem::path& path) {
    const std::string s = path.string();
    if (s.ends_with(".nii")) return read_nifti(path);
    if (s.ends_with(".rvol.json") || s.ends_with(".rvol")) return read_rawvol(path);
    throw data_error("unsupported volume extension (expected .nii, .rvol or .rvol.json): " + s);
}

inline void save_volume(const ScalarVolume& vol, const std::filesystem::path& path,
                        Encoding enc = {}) {
    const std::string s = path.string();
    if (s.ends_with(".nii")) {
        write_nifti(path, vol, enc);
        return;
    }
    if (s.ends_with(".rvol.json") || s.ends_with(".rvol")) {
        if (enc.endian != Endian::little)
            throw std::invalid_argument("rawvol files are little endian only");
        write_rawvol(path, vol, enc.type);
        return;
    }
    throw data_error("unsupported volume extension (expected .nii, .rvol or .rvol.json): " + s);
}

/// Masks are stored as unsigned 8-bit volumes with values {0,1}.
inline void save_mask(const BinaryMask& mask, const std::filesystem::path& path,
                      Endian endian = Endian::little) {
    const std::string s = path.string();
    if (s.ends_with(".nii")) {
        write_nifti(path, mask, endian);
        return;
    }
    if (s.ends_with(".rvol.json") || s.ends_with(".rvol")) {
        write_rawvol(path, mask);
        return;
    }
    throw data_error("unsupported volume extension (expected .nii, .rvol or .rvol.json): " + s);
}

/// Loads a volume and requires every voxel to be exactly 0 or 1.
inline BinaryMask load_mask(const std::filesystem::path& path) {
    const ScalarVolume v = load_volume(path);
    BinaryMask m = make_mask(v.shape);
    for (std::size_t i = 0; i < v.voxels.size(); ++i) {
        if (v.voxels[i] == 0.0) m.voxels[i] = 0;
        else if (v.voxels[i] == 1.0) m.voxels[i] = 1;
        else
            throw data_error("mask file contains non-binary value " +
                             std::to_string(v.voxels[i]) + ": " + path.string());
    }
    return m;
}

}  // namespace segqc
