#include <doctest.h>

#include <cstring>
#include <fstream>
#include <random>

#include "segqc/volume_io.hpp"
#include "test_support.hpp"

using namespace segqc;
using segqc_test::TempDir;

namespace {

// Byte-level NIfTI-1 fixture builder, independent of the library's header
// struct: every field is stored at its documented offset.
template <typename T>
void store(std::vector<unsigned char>& buf, std::size_t offset, T value, bool big_endian) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if (big_endian)
        for (std::size_t i = 0; i < sizeof(T); ++i) buf[offset + i] = bytes[sizeof(T) - 1 - i];
    else
        for (std::size_t i = 0; i < sizeof(T); ++i) buf[offset + i] = bytes[i];
}

struct FixtureSpec {
    std::int16_t datatype = 16;  // f32
    std::int16_t dim0 = 3;
    std::int16_t dim4 = 1;
    float scl_slope = 1.0f;
    float scl_inter = 0.0f;
    bool big_endian = false;
    const char* magic = "n+1";
    std::vector<float> payload = {0, 1, 2, 3, 4, 5, 6, 7};
};

std::vector<unsigned char> build_nifti_2x2x2(const FixtureSpec& spec) {
    std::vector<unsigned char> f(352 + spec.payload.size() * 4, 0);
    const bool be = spec.big_endian;
    store<std::int32_t>(f, 0, 348, be);                       // sizeof_hdr
    store<std::int16_t>(f, 40, spec.dim0, be);                // dim[0]
    store<std::int16_t>(f, 42, 2, be);                        // dim[1]
    store<std::int16_t>(f, 44, 2, be);                        // dim[2]
    store<std::int16_t>(f, 46, 2, be);                        // dim[3]
    store<std::int16_t>(f, 48, spec.dim4, be);                // dim[4]
    store<std::int16_t>(f, 70, spec.datatype, be);            // datatype
    store<std::int16_t>(f, 72, 32, be);                       // bitpix
    store<float>(f, 80, 1.0f, be);                            // pixdim[1]
    store<float>(f, 84, 1.0f, be);                            // pixdim[2]
    store<float>(f, 88, 1.0f, be);                            // pixdim[3]
    store<float>(f, 108, 352.0f, be);                         // vox_offset
    store<float>(f, 112, spec.scl_slope, be);                 // scl_slope
    store<float>(f, 116, spec.scl_inter, be);                 // scl_inter
    std::memcpy(f.data() + 344, spec.magic, std::strlen(spec.magic) + 1);
    for (std::size_t i = 0; i < spec.payload.size(); ++i)
        store<float>(f, 352 + 4 * i, spec.payload[i], be);
    return f;
}

void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                      std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("hand-built 2x2x2 float NIfTI parses field by field") {
    TempDir tmp;
    const auto file = tmp.path / "fixture.nii";
    write_bytes(file, build_nifti_2x2x2({}));

    const ScalarVolume v = read_nifti(file);
    CHECK(v.shape == GridShape{2, 2, 2});
    for (std::size_t i = 0; i < 8; ++i) CHECK(v.voxels[i] == static_cast<double>(i));
    CHECK(v.meta.source_datatype == 16);
    CHECK(v.meta.source_endian == Endian::little);
    REQUIRE(v.meta.voxel_size_mm.has_value());
    CHECK((*v.meta.voxel_size_mm)[0] == 1.0);

    SUBCASE("load_volume dispatches on the .nii extension") {
        const ScalarVolume w = load_volume(file);
        CHECK(w.voxels == v.voxels);
    }
}

TEST_CASE("byte-swapped fixture reads identically") {
    TempDir tmp;
    FixtureSpec spec;
    spec.big_endian = true;
    const auto file = tmp.path / "swapped.nii";
    write_bytes(file, build_nifti_2x2x2(spec));

    const ScalarVolume v = read_nifti(file);
    CHECK(v.shape == GridShape{2, 2, 2});
    for (std::size_t i = 0; i < 8; ++i) CHECK(v.voxels[i] == static_cast<double>(i));
    CHECK(v.meta.source_endian == Endian::big);
}

TEST_CASE("NIfTI rejection cases") {
    TempDir tmp;

    SUBCASE("bad magic") {
        FixtureSpec spec;
        spec.magic = "xx1";
        const auto file = tmp.path / "bad_magic.nii";
        write_bytes(file, build_nifti_2x2x2(spec));
        CHECK_THROWS_WITH_AS(read_nifti(file), doctest::Contains("magic"), data_error);
    }

    SUBCASE("paired-file magic ni1 is rejected with a message") {
        FixtureSpec spec;
        spec.magic = "ni1";
        const auto file = tmp.path / "paired.nii";
        write_bytes(file, build_nifti_2x2x2(spec));
        CHECK_THROWS_WITH_AS(read_nifti(file), doctest::Contains("paired"), data_error);
    }

    SUBCASE("unsupported datatype code") {
        FixtureSpec spec;
        spec.datatype = 8;  // int32, outside the supported subset
        const auto file = tmp.path / "dtype.nii";
        write_bytes(file, build_nifti_2x2x2(spec));
        CHECK_THROWS_WITH_AS(read_nifti(file), doctest::Contains("datatype"), data_error);
    }

    SUBCASE("truncated header") {
        auto bytes = build_nifti_2x2x2({});
        bytes.resize(100);
        const auto file = tmp.path / "trunc_hdr.nii";
        write_bytes(file, bytes);
        CHECK_THROWS_AS(read_nifti(file), data_error);
    }

    SUBCASE("payload shorter than the declared dims") {
        auto bytes = build_nifti_2x2x2({});
        bytes.resize(352 + 4 * 5);  // only 5 of 8 voxels present
        const auto file = tmp.path / "trunc_payload.nii";
        write_bytes(file, bytes);
        CHECK_THROWS_WITH_AS(read_nifti(file), doctest::Contains("payload"), data_error);
    }

    SUBCASE("sizeof_hdr wrong in both byte orders") {
        auto bytes = build_nifti_2x2x2({});
        store<std::int32_t>(bytes, 0, 500, false);
        const auto file = tmp.path / "not_nifti.nii";
        write_bytes(file, bytes);
        CHECK_THROWS_AS(read_nifti(file), data_error);
    }

    SUBCASE("dim[0]=4 needs dim[4]=1") {
        FixtureSpec ok;
        ok.dim0 = 4;
        ok.dim4 = 1;
        const auto okfile = tmp.path / "dim4_ok.nii";
        write_bytes(okfile, build_nifti_2x2x2(ok));
        CHECK(read_nifti(okfile).shape == GridShape{2, 2, 2});

        FixtureSpec bad;
        bad.dim0 = 4;
        bad.dim4 = 2;
        const auto badfile = tmp.path / "dim4_bad.nii";
        write_bytes(badfile, build_nifti_2x2x2(bad));
        CHECK_THROWS_AS(read_nifti(badfile), data_error);
    }

    SUBCASE("NaN voxels are rejected at load") {
        FixtureSpec spec;
        spec.payload[3] = std::numeric_limits<float>::quiet_NaN();
        const auto file = tmp.path / "nan.nii";
        write_bytes(file, build_nifti_2x2x2(spec));
        CHECK_THROWS_WITH_AS(read_nifti(file), doctest::Contains("non-finite"), data_error);
    }
}

TEST_CASE("scl_slope and scl_inter apply on read") {
    TempDir tmp;
    FixtureSpec spec;
    spec.scl_slope = 2.5f;
    spec.scl_inter = 1.0f;
    const auto file = tmp.path / "scaled.nii";
    write_bytes(file, build_nifti_2x2x2(spec));
    const ScalarVolume v = read_nifti(file);
    for (std::size_t i = 0; i < 8; ++i)
        CHECK(v.voxels[i] == doctest::Approx(2.5 * static_cast<double>(i) + 1.0));

    SUBCASE("slope 0 reads as slope 1, intercept 0") {
        FixtureSpec zero;
        zero.scl_slope = 0.0f;
        zero.scl_inter = 99.0f;
        const auto zfile = tmp.path / "slope0.nii";
        write_bytes(zfile, build_nifti_2x2x2(zero));
        const ScalarVolume z = read_nifti(zfile);
        for (std::size_t i = 0; i < 8; ++i) CHECK(z.voxels[i] == static_cast<double>(i));
    }
}

TEST_CASE("NIfTI round-trips are bit-exact for every dtype and endianness") {
    TempDir tmp;
    std::mt19937_64 rng(42);
    auto u01 = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

    for (VoxelType type : {VoxelType::u8, VoxelType::i16, VoxelType::f32, VoxelType::f64}) {
        for (Endian endian : {Endian::little, Endian::big}) {
            ScalarVolume v = make_volume({3, 2, 2});
            for (double& x : v.voxels) {
                switch (type) {
                    case VoxelType::u8: x = static_cast<double>(rng() % 256); break;
                    case VoxelType::i16:
                        x = static_cast<double>(static_cast<std::int16_t>(rng()));
                        break;
                    case VoxelType::f32: x = static_cast<float>(u01() * 100.0 - 50.0); break;
                    case VoxelType::f64: x = u01() * 100.0 - 50.0; break;
                }
            }
            const auto file = tmp.path / ("rt_" + std::to_string(static_cast<int>(type)) + "_" +
                                          std::to_string(static_cast<int>(endian)) + ".nii");
            write_nifti(file, v, Encoding{type, endian});
            const ScalarVolume r = read_nifti(file);
            CHECK(r.shape == v.shape);
            CHECK(r.voxels == v.voxels);

            write_nifti(tmp.path / "again.nii", r, Encoding{type, endian});
            CHECK(read_bytes(file) == read_bytes(tmp.path / "again.nii"));
        }
    }
}

TEST_CASE("integer encodings reject unrepresentable values") {
    TempDir tmp;
    ScalarVolume v = make_volume({2, 1, 1});

    v.voxels = {-1.0, 0.0};
    CHECK_THROWS_AS(write_nifti(tmp.path / "neg.nii", v, Encoding{VoxelType::u8, Endian::little}),
                    std::range_error);
    v.voxels = {300.5, 0.0};
    CHECK_THROWS_AS(write_nifti(tmp.path / "big.nii", v, Encoding{VoxelType::u8, Endian::little}),
                    std::range_error);
    v.voxels = {70000.0, 0.0};
    CHECK_THROWS_AS(write_nifti(tmp.path / "i16.nii", v, Encoding{VoxelType::i16, Endian::little}),
                    std::range_error);
}

TEST_CASE("all-true mask saves as eight 0x01 bytes") {
    TempDir tmp;
    const auto file = tmp.path / "mask.nii";
    write_nifti(file, make_mask({2, 2, 2}, true));
    const auto bytes = read_bytes(file);
    REQUIRE(bytes.size() == 352 + 8);
    for (std::size_t i = 352; i < bytes.size(); ++i) CHECK(bytes[i] == 0x01);

    const BinaryMask m = load_mask(file);
    CHECK(m.true_count() == 8);
}

TEST_CASE("rawvol round-trip and validation") {
    TempDir tmp;

    SUBCASE("f32 volume round-trips exactly") {
        ScalarVolume v = make_volume({2, 3, 1});
        for (std::size_t i = 0; i < v.voxels.size(); ++i)
            v.voxels[i] = static_cast<float>(0.125 * static_cast<double>(i));
        const auto path = tmp.path / "vol.rvol.json";
        write_rawvol(path, v);
        const ScalarVolume r = read_rawvol(path);
        CHECK(r.shape == v.shape);
        CHECK(r.voxels == v.voxels);
        CHECK(load_volume(path).voxels == v.voxels);  // extension dispatch
    }

    SUBCASE("mask round-trips through u8") {
        BinaryMask m = make_mask({2, 2, 1});
        m.voxels = {1, 0, 0, 1};
        const auto path = tmp.path / "mask.rvol.json";
        write_rawvol(path, m);
        CHECK(load_mask(path).voxels == m.voxels);
    }

    SUBCASE("payload size mismatch is rejected") {
        ScalarVolume v = make_volume({2, 2, 2}, 1.0);
        const auto path = tmp.path / "bad.rvol.json";
        write_rawvol(path, v);
        std::ofstream trunc(tmp.path / "bad.rvol.bin", std::ios::binary | std::ios::trunc);
        trunc << "xx";
        trunc.close();
        CHECK_THROWS_AS(read_rawvol(path), data_error);
    }

    SUBCASE("sidecar with wrong order is rejected") {
        std::ofstream js(tmp.path / "o.rvol.json");
        js << R"({"shape":[1,1,1],"dtype":"f32","order":"z-fastest","endian":"little"})";
        js.close();
        std::ofstream bin(tmp.path / "o.rvol.bin", std::ios::binary);
        bin << "0000";
        bin.close();
        CHECK_THROWS_AS(read_rawvol(tmp.path / "o.rvol.json"), data_error);
    }
}

TEST_CASE("unsupported extensions are rejected") {
    CHECK_THROWS_AS(load_volume("volume.mha"), data_error);
    ScalarVolume v = make_volume({1, 1, 1});
    CHECK_THROWS_AS(save_volume(v, "volume.mha"), data_error);
}

TEST_CASE("non-binary mask file is rejected") {
    TempDir tmp;
    ScalarVolume v = make_volume({2, 1, 1});
    v.voxels = {0.0, 0.5};
    const auto path = tmp.path / "notmask.rvol.json";
    write_rawvol(path, v);
    CHECK_THROWS_AS(load_mask(path), data_error);
}
