#pragma once

// rawvol: a trivially hand-constructable volume format used by tests and
// synthetic cohorts. A JSON sidecar (<stem>.rvol.json) describes the grid;
// the voxel payload lives next to it in <stem>.rvol.bin, little endian,
// x-fastest order, dtype f32 or u8.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "segqc/encoding.hpp"
#include "segqc/volume.hpp"

namespace segqc {

namespace detail {

inline std::filesystem::path rawvol_sidecar(const std::filesystem::path& path) {
    std::string s = path.string();
    if (s.ends_with(".rvol.json")) return path;
    if (s.ends_with(".rvol")) return std::filesystem::path(s + ".json");
    throw data_error("not a rawvol path (expected .rvol or .rvol.json): " + s);
}

inline std::filesystem::path rawvol_payload(const std::filesystem::path& sidecar) {
    std::string s = sidecar.string();
    return std::filesystem::path(s.substr(0, s.size() - 5) + ".bin");  // .json -> .bin
}

inline std::vector<unsigned char> read_all_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open: " + path.string());
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                      std::istreambuf_iterator<char>());
}

}  // namespace detail

inline ScalarVolume read_rawvol(const std::filesystem::path& path) {
    const auto sidecar = detail::rawvol_sidecar(path);
    nlohmann::json j;
    {
        std::ifstream in(sidecar);
        if (!in) throw data_error("cannot open rawvol sidecar: " + sidecar.string());
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw data_error("bad rawvol sidecar " + sidecar.string() + ": " + e.what());
        }
    }
    for (const char* key : {"shape", "dtype", "order", "endian"})
        if (!j.contains(key))
            throw data_error("rawvol sidecar missing key '" + std::string(key) + "': " +
                             sidecar.string());
    if (j["order"] != "x-fastest")
        throw data_error("rawvol order must be x-fastest: " + sidecar.string());
    if (j["endian"] != "little")
        throw data_error("rawvol endian must be little: " + sidecar.string());
    const auto dims = j["shape"].get<std::vector<std::int64_t>>();
    if (dims.size() != 3 || dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
        throw data_error("rawvol shape must be three positive extents: " + sidecar.string());
    const std::string dtype = j["dtype"].get<std::string>();
    VoxelType type;
    if (dtype == "f32") type = VoxelType::f32;
    else if (dtype == "u8") type = VoxelType::u8;
    else throw data_error("rawvol dtype must be f32 or u8, got '" + dtype + "'");

    GridShape shape{static_cast<std::size_t>(dims[0]), static_cast<std::size_t>(dims[1]),
                    static_cast<std::size_t>(dims[2])};
    const auto raw = detail::read_all_bytes(detail::rawvol_payload(sidecar));
    const std::size_t expected = shape.voxel_count() * voxel_type_size(type);
    if (raw.size() != expected)
        throw data_error("rawvol payload is " + std::to_string(raw.size()) + " bytes, shape " +
                         shape.str() + " requires " + std::to_string(expected));

    ScalarVolume vol;
    vol.shape = shape;
    vol.voxels = decode_voxels(raw, type, Endian::little, shape.voxel_count(), 1.0, 0.0);
    vol.meta.source_datatype = static_cast<std::int16_t>(type);
    require_finite(vol, "rawvol load of " + sidecar.string());
    return vol;
}

inline void write_rawvol(const std::filesystem::path& path, const ScalarVolume& vol,
                         VoxelType type = VoxelType::f32) {
    if (type != VoxelType::f32 && type != VoxelType::u8)
        throw std::invalid_argument("rawvol supports only f32 and u8 encodings");
    const auto sidecar = detail::rawvol_sidecar(path);
    nlohmann::json j;
    j["shape"] = {vol.shape.nx, vol.shape.ny, vol.shape.nz};
    j["dtype"] = type == VoxelType::f32 ? "f32" : "u8";
    j["order"] = "x-fastest";
    j["endian"] = "little";
    const auto payload = encode_voxels(vol.voxels, type, Endian::little);

    std::ofstream js(sidecar, std::ios::trunc);
    if (!js) throw data_error("cannot open for writing: " + sidecar.string());
    js << j.dump() << "\n";
    std::ofstream bin(detail::rawvol_payload(sidecar), std::ios::binary | std::ios::trunc);
    if (!bin) throw data_error("cannot open for writing: " + detail::rawvol_payload(sidecar).string());
    bin.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    if (!js || !bin) throw data_error("rawvol write failed: " + sidecar.string());
}

inline void write_rawvol(const std::filesystem::path& path, const BinaryMask& mask) {
    ScalarVolume v = make_volume(mask.shape);
    for (std::size_t i = 0; i < mask.voxels.size(); ++i)
        v.voxels[i] = mask.voxels[i] ? 1.0 : 0.0;
    write_rawvol(path, v, VoxelType::u8);
}

}  // namespace segqc
