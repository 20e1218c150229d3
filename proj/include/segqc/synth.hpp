#pragma once

// Deterministic synthetic cohorts: each case is a smooth background image
// with bright Gaussian lesions, a ball-union ground truth, an MC-style
// stack of probability maps whose disagreement lives on lesion boundaries,
// and a reconstruction with the lesion area inpainted.
//
// The degradation knob q in [0,1] drives a per-case outward shift of the
// consensus boundary (bounded away from zero so q=1 cohorts reliably fail),
// per-sample erosion/dilation jitter around that consensus, and voxel noise
// applied in the boundary-distance domain. Consequences by design: true
// Dice falls as q rises while the entropy voxel-wise sum rises, so
// uncertainty-VS correlates negatively with Dice in these cohorts and a
// failure gate flags cases whose VS is above a threshold.
//
// Randomness: mt19937_64 seeded per case via splitmix64 over (seed, index);
// uniforms take the top 53 bits, normals come from Box-Muller. Cohorts are
// bit-reproducible within this implementation.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "segqc/csv.hpp"
#include "segqc/qc_maps.hpp"
#include "segqc/volume.hpp"
#include "segqc/volume_io.hpp"

namespace segqc {

struct SynthParams {
    GridShape shape{32, 32, 32};
    std::size_t lesion_count_min = 2;
    std::size_t lesion_count_max = 4;
    double radius_min = 3.0;
    double radius_max = 6.0;
    double degradation = 0.0;  // q
    std::size_t sample_count = 20;
    double recon_noise = 0.05;
    std::uint64_t seed = 0;

    void validate() const {
        if (shape.voxel_count() == 0)
            throw std::invalid_argument("synth: shape must have positive extents");
        if (lesion_count_min < 1 || lesion_count_max < lesion_count_min)
            throw std::invalid_argument("synth: bad lesion count range");
        if (radius_min < 1.0 || radius_max < radius_min)
            throw std::invalid_argument("synth: radii must satisfy 1 <= min <= max");
        const double min_axis =
            static_cast<double>(std::min({shape.nx, shape.ny, shape.nz}));
        if (2.0 * radius_min + 2.0 > min_axis)
            throw std::invalid_argument("synth: smallest lesion radius does not fit the grid");
        if (!(degradation >= 0.0 && degradation <= 1.0))
            throw std::invalid_argument("synth: degradation q must lie in [0,1]");
        if (sample_count < 2)
            throw std::invalid_argument("synth: need at least 2 samples per case");
        if (recon_noise < 0.0)
            throw std::invalid_argument("synth: reconstruction noise must be >= 0");
    }
};

struct SynthCase {
    ScalarVolume image;
    BinaryMask gt;
    SampleStack stack;
    ScalarVolume reconstruction;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::mt19937_64 case_rng(std::uint64_t seed, std::uint64_t case_index) {
    std::uint64_t s = seed ^ (0xD1B54A32D192ED03ull * (case_index + 1));
    return std::mt19937_64(splitmix64(s));
}

inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double normal01(std::mt19937_64& rng) {
    const double u1 = 1.0 - uniform01(rng);  // (0,1], keeps the log finite
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Lesion {
    double cx, cy, cz;
    double radius;
    double brightness;
};

// Boundary-shift amplitudes, in voxels. The per-case dilation is bounded
// away from zero so a fully degraded case cannot land on a harmless shift.
constexpr double kBiasMin = 1.2;
constexpr double kBiasMax = 3.0;
constexpr double kJitterAmp = 1.2;
constexpr double kShiftNoiseAmp = 0.8;
constexpr double kBoundarySoftness = 0.6;
constexpr int kPlacementRetries = 100;

}  // namespace detail

inline SynthCase generate_case(const SynthParams& params, std::size_t case_index) {
    params.validate();
    std::mt19937_64 rng = detail::case_rng(params.seed, case_index);
    const GridShape& s = params.shape;
    const double q = params.degradation;

    // Smooth background: three low-frequency sinusoids with random phase.
    const double fx = 1.0 + static_cast<double>(rng() % 2);
    const double fy = 1.0 + static_cast<double>(rng() % 2);
    const double fz = 1.0 + static_cast<double>(rng() % 2);
    const double px = detail::uniform01(rng), py = detail::uniform01(rng),
                 pz = detail::uniform01(rng);
    constexpr double two_pi = 6.283185307179586;

    const std::size_t lesion_count =
        params.lesion_count_min +
        static_cast<std::size_t>(rng() % (params.lesion_count_max - params.lesion_count_min + 1));
    std::vector<detail::Lesion> lesions;
    for (std::size_t l = 0; l < lesion_count; ++l) {
        bool placed = false;
        for (int attempt = 0; attempt < detail::kPlacementRetries && !placed; ++attempt) {
            detail::Lesion L;
            L.radius = params.radius_min +
                       detail::uniform01(rng) * (params.radius_max - params.radius_min);
            const double margin = std::ceil(L.radius) + 1.0;
            bool fits = true;
            for (std::size_t axis_len : {s.nx, s.ny, s.nz})
                if (2.0 * margin >= static_cast<double>(axis_len)) fits = false;
            if (!fits) continue;
            L.cx = margin + detail::uniform01(rng) * (static_cast<double>(s.nx) - 2.0 * margin);
            L.cy = margin + detail::uniform01(rng) * (static_cast<double>(s.ny) - 2.0 * margin);
            L.cz = margin + detail::uniform01(rng) * (static_cast<double>(s.nz) - 2.0 * margin);
            L.brightness = 0.55 + 0.1 * detail::uniform01(rng);
            // Keep centres apart for the first half of the attempts.
            bool crowded = false;
            if (attempt < detail::kPlacementRetries / 2) {
                for (const auto& other : lesions) {
                    const double dx = L.cx - other.cx, dy = L.cy - other.cy, dz = L.cz - other.cz;
                    if (std::sqrt(dx * dx + dy * dy + dz * dz) < L.radius + other.radius)
                        crowded = true;
                }
            }
            if (crowded) continue;
            lesions.push_back(L);
            placed = true;
        }
        if (!placed)
            throw data_error("synth: could not place lesion " + std::to_string(l) +
                             " inside grid " + s.str() + " after bounded retries");
    }

    // Signed distance to the nearest lesion surface (negative inside) and
    // the image with lesion brightness added.
    SynthCase out;
    out.image = make_volume(s);
    out.gt = make_mask(s);
    std::vector<double> dist(s.voxel_count());
    for (std::size_t z = 0; z < s.nz; ++z)
        for (std::size_t y = 0; y < s.ny; ++y)
            for (std::size_t x = 0; x < s.nx; ++x) {
                const std::size_t i = out.image.index(x, y, z);
                const double bg =
                    0.30 +
                    0.08 * std::sin(two_pi * (fx * static_cast<double>(x) /
                                                  static_cast<double>(s.nx) + px)) +
                    0.08 * std::sin(two_pi * (fy * static_cast<double>(y) /
                                                  static_cast<double>(s.ny) + py)) +
                    0.08 * std::sin(two_pi * (fz * static_cast<double>(z) /
                                                  static_cast<double>(s.nz) + pz));
                double d = 1e9;
                double bump = 0.0;
                for (const auto& L : lesions) {
                    const double dx = static_cast<double>(x) - L.cx;
                    const double dy = static_cast<double>(y) - L.cy;
                    const double dz = static_cast<double>(z) - L.cz;
                    const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
                    d = std::min(d, r - L.radius);
                    const double sigma = L.radius / 2.0;
                    bump += L.brightness * std::exp(-r * r / (2.0 * sigma * sigma));
                }
                dist[i] = d;
                out.gt.voxels[i] = d <= 0.0 ? 1 : 0;
                out.image.voxels[i] = std::clamp(bg + bump, 0.0, 1.0);
            }

    // Per-case systematic dilation of the consensus prediction, growing
    // with q. Dilation (not erosion) keeps the lesion surface and its
    // disagreement band alive, so uncertainty grows monotonically with q.
    const double bias = -q * (detail::kBiasMin +
                              (detail::kBiasMax - detail::kBiasMin) * detail::uniform01(rng));

    out.stack.samples.reserve(params.sample_count);
    for (std::size_t n = 0; n < params.sample_count; ++n) {
        const double jitter =
            q * detail::kJitterAmp * (2.0 * detail::uniform01(rng) - 1.0);
        ProbabilityMap p = make_volume(s);
        for (std::size_t i = 0; i < p.voxels.size(); ++i) {
            const double shift_noise =
                q * detail::kShiftNoiseAmp * detail::normal01(rng);
            p.voxels[i] = detail::logistic(
                -(dist[i] + bias + jitter + shift_noise) / detail::kBoundarySoftness);
        }
        out.stack.samples.push_back(std::move(p));
    }

    // Reconstruction: lesion area zeroed, inpainted by neighbour diffusion,
    // then voxel noise scaled by recon_noise * q.
    out.reconstruction = mask_out_lesions(out.image, out.gt);
    double bg_sum = 0.0;
    std::size_t bg_n = 0;
    for (std::size_t i = 0; i < out.image.voxels.size(); ++i)
        if (!out.gt.voxels[i]) {
            bg_sum += out.image.voxels[i];
            ++bg_n;
        }
    const double bg_mean = bg_n > 0 ? bg_sum / static_cast<double>(bg_n) : 0.0;
    for (std::size_t i = 0; i < out.reconstruction.voxels.size(); ++i)
        if (out.gt.voxels[i]) out.reconstruction.voxels[i] = bg_mean;
    ScalarVolume buffer = out.reconstruction;
    for (int pass = 0; pass < 10; ++pass) {
        for (std::size_t z = 0; z < s.nz; ++z)
            for (std::size_t y = 0; y < s.ny; ++y)
                for (std::size_t x = 0; x < s.nx; ++x) {
                    const std::size_t i = out.reconstruction.index(x, y, z);
                    if (!out.gt.voxels[i]) continue;
                    double acc = 0.0;
                    int cnt = 0;
                    if (x > 0) { acc += out.reconstruction.at(x - 1, y, z); ++cnt; }
                    if (x + 1 < s.nx) { acc += out.reconstruction.at(x + 1, y, z); ++cnt; }
                    if (y > 0) { acc += out.reconstruction.at(x, y - 1, z); ++cnt; }
                    if (y + 1 < s.ny) { acc += out.reconstruction.at(x, y + 1, z); ++cnt; }
                    if (z > 0) { acc += out.reconstruction.at(x, y, z - 1); ++cnt; }
                    if (z + 1 < s.nz) { acc += out.reconstruction.at(x, y, z + 1); ++cnt; }
                    buffer.voxels[i] = cnt > 0 ? acc / cnt : buffer.voxels[i];
                }
        std::swap(out.reconstruction.voxels, buffer.voxels);
    }
    const double noise_scale = params.recon_noise * q;
    for (double& v : out.reconstruction.voxels) v += noise_scale * detail::normal01(rng);

    return out;
}

// ---- cohort generation and manifest ----

enum class VolumeFormat { rawvol, nii };

struct CohortCaseEntry {
    std::string id;
    double q = 0.0;
    std::string image_path;  // relative to the manifest directory
    std::string gt_path;
    std::vector<std::string> sample_paths;
    std::string recon_path;

    bool operator==(const CohortCaseEntry&) const = default;
};

struct CohortManifest {
    std::filesystem::path base_dir;
    std::vector<CohortCaseEntry> cases;

    std::filesystem::path resolve(const std::string& rel) const { return base_dir / rel; }
};

inline const char* kManifestHeader = "id,q,image_path,gt_path,sample_paths,recon_path";

inline void write_manifest(const CohortManifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot open for writing: " + path.string());
    out << kManifestHeader << "\n";
    for (const auto& c : manifest.cases) {
        out << c.id << ',' << detail::format_double(c.q) << ',' << c.image_path << ','
            << c.gt_path << ',';
        for (std::size_t i = 0; i < c.sample_paths.size(); ++i) {
            if (i) out << ';';
            out << c.sample_paths[i];
        }
        out << ',' << c.recon_path << "\n";
    }
    if (!out) throw data_error("manifest write failed: " + path.string());
}

inline CohortManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open manifest: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw data_error("empty manifest: " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kManifestHeader)
        throw data_error("bad manifest header in " + path.string());
    CohortManifest m;
    m.base_dir = path.parent_path();
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto f = detail::split_csv_line(line);
        const std::string ctx = path.string() + ":" + std::to_string(line_no);
        if (f.size() != 6) throw data_error(ctx + ": expected 6 fields");
        CohortCaseEntry e;
        e.id = f[0];
        const auto q = detail::parse_opt_double(f[1], ctx);
        if (!q) throw data_error(ctx + ": missing q");
        e.q = *q;
        e.image_path = f[2];
        e.gt_path = f[3];
        std::string cur;
        for (char ch : f[4] + ";") {
            if (ch == ';') {
                if (!cur.empty()) e.sample_paths.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(ch);
            }
        }
        e.recon_path = f[5];
        if (e.id.empty() || e.image_path.empty() || e.gt_path.empty() ||
            e.sample_paths.empty() || e.recon_path.empty())
            throw data_error(ctx + ": incomplete manifest row");
        m.cases.push_back(std::move(e));
    }
    return m;
}

/// Generates n cases with the given per-case degradation schedule, writes
/// the volumes under out_dir/<id>/ and the manifest to out_dir/cohort.csv.
inline CohortManifest generate_cohort(const SynthParams& base,
                                      const std::vector<double>& q_schedule,
                                      const std::filesystem::path& out_dir,
                                      VolumeFormat format = VolumeFormat::rawvol) {
    if (q_schedule.empty()) throw std::invalid_argument("generate_cohort: empty q schedule");
    std::filesystem::create_directories(out_dir);
    const char* ext = format == VolumeFormat::rawvol ? ".rvol.json" : ".nii";

    CohortManifest manifest;
    manifest.base_dir = out_dir;
    for (std::size_t i = 0; i < q_schedule.size(); ++i) {
        SynthParams p = base;
        p.degradation = q_schedule[i];
        const SynthCase sc = generate_case(p, i);

        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "case_%03zu", i);
        CohortCaseEntry e;
        e.id = idbuf;
        e.q = q_schedule[i];
        const std::filesystem::path case_dir = out_dir / e.id;
        std::filesystem::create_directories(case_dir);

        e.image_path = e.id + "/image" + std::string(ext);
        e.gt_path = e.id + "/gt" + std::string(ext);
        e.recon_path = e.id + "/recon" + std::string(ext);
        save_volume(sc.image, out_dir / e.image_path);
        save_mask(sc.gt, out_dir / e.gt_path);
        save_volume(sc.reconstruction, out_dir / e.recon_path);
        for (std::size_t n = 0; n < sc.stack.samples.size(); ++n) {
            char sbuf[32];
            std::snprintf(sbuf, sizeof(sbuf), "/sample_%02zu", n);
            const std::string rel = e.id + sbuf + std::string(ext);
            save_volume(sc.stack.samples[n], out_dir / rel);
            e.sample_paths.push_back(rel);
        }
        manifest.cases.push_back(std::move(e));
    }
    write_manifest(manifest, out_dir / "cohort.csv");
    return manifest;
}

}  // namespace segqc
