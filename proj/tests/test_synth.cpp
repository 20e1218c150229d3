#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <numeric>

#include "segqc/metrics.hpp"
#include "segqc/preprocess.hpp"
#include "segqc/synth.hpp"
#include "test_support.hpp"

using namespace segqc;
using segqc_test::TempDir;

namespace {

SynthParams quick_params(double q = 0.0) {
    SynthParams p;
    p.shape = {16, 16, 16};
    p.lesion_count_min = 1;
    p.lesion_count_max = 2;
    p.radius_min = 2.0;
    p.radius_max = 3.0;
    p.sample_count = 6;
    p.degradation = q;
    return p;
}

double case_dice(const SynthCase& c) {
    return dice_coefficient(binarize(mc_average(c.stack), 0.5), c.gt);
}

}  // namespace

TEST_CASE("generate_case is bit-deterministic per (seed, index)") {
    SynthParams p = quick_params(0.5);
    p.seed = 42;
    const SynthCase a = generate_case(p, 3);
    const SynthCase b = generate_case(p, 3);
    CHECK(a.image.voxels == b.image.voxels);
    CHECK(a.gt.voxels == b.gt.voxels);
    CHECK(a.reconstruction.voxels == b.reconstruction.voxels);
    REQUIRE(a.stack.samples.size() == b.stack.samples.size());
    for (std::size_t i = 0; i < a.stack.samples.size(); ++i)
        CHECK(a.stack.samples[i].voxels == b.stack.samples[i].voxels);

    SUBCASE("a different case index changes the output") {
        const SynthCase c = generate_case(p, 4);
        CHECK(c.image.voxels != a.image.voxels);
    }
    SUBCASE("a different seed changes the output") {
        SynthParams p2 = p;
        p2.seed = 43;
        CHECK(generate_case(p2, 3).image.voxels != a.image.voxels);
    }
}

TEST_CASE("q = 0 cases are segmented almost perfectly") {
    SynthParams p = quick_params(0.0);
    p.seed = 7;
    for (std::size_t i = 0; i < 8; ++i) {
        const SynthCase c = generate_case(p, i);
        CHECK(case_dice(c) >= 0.95);
        CHECK(c.gt.true_count() > 0);
        for (const auto& s : c.stack.samples)
            for (double v : s.voxels) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
    }
}

TEST_CASE("q = 1 cases fail on at least 80 percent of a cohort") {
    SynthParams p = quick_params(1.0);
    p.seed = 11;
    std::size_t failed = 0;
    const std::size_t n = 20;
    for (std::size_t i = 0; i < n; ++i)
        if (case_dice(generate_case(p, i)) < 0.75) ++failed;
    CHECK(failed >= n * 8 / 10);
}

TEST_CASE("dice falls and uncertainty VS rises along a q ramp") {
    SynthParams p = quick_params();
    p.seed = 13;
    std::vector<double> qs, dices, vs;
    const std::size_t n = 20;
    for (std::size_t i = 0; i < n; ++i) {
        p.degradation = static_cast<double>(i) / static_cast<double>(n - 1);
        const SynthCase c = generate_case(p, i);
        const ProbabilityMap avg = mc_average(c.stack);
        qs.push_back(p.degradation);
        dices.push_back(dice_coefficient(binarize(avg, 0.5), c.gt));
        vs.push_back(voxelwise_sum(entropy_map(avg)));
    }
    CHECK(pearson_r(qs, dices) < -0.4);
    CHECK(pearson_r(qs, vs) > 0.4);
    CHECK(pearson_r(vs, dices) < -0.4);

    // Spearman sign: Dice decreases as q increases in rank terms too.
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
        return r;
    };
    CHECK(pearson_r(ranks(qs), ranks(dices)) < 0.0);
}

TEST_CASE("unplaceable lesions raise a generation error") {
    SUBCASE("radius that can never fit fails parameter validation") {
        SynthParams p = quick_params();
        p.shape = {9, 9, 9};
        p.radius_min = 4.0;
        p.radius_max = 4.0;
        CHECK_THROWS_AS(generate_case(p, 0), std::invalid_argument);
    }
    SUBCASE("radius range that almost never fits exhausts the retries") {
        SynthParams p = quick_params();
        p.shape = {9, 9, 9};
        p.radius_min = 3.0;
        p.radius_max = 4.0;  // only r = 3.0 exactly would fit; draws are continuous
        CHECK_THROWS_AS(generate_case(p, 0), data_error);
    }
}

TEST_CASE("generate_cohort writes volumes and a recoverable manifest") {
    TempDir tmp;
    SynthParams p = quick_params();
    p.seed = 17;
    const std::vector<double> q = {0.0, 0.25, 0.5, 0.75, 1.0};
    const CohortManifest manifest = generate_cohort(p, q, tmp.path / "cohort");

    REQUIRE(manifest.cases.size() == 5);
    CHECK(manifest.cases[0].id == "case_000");
    CHECK(manifest.cases[4].q == 1.0);

    SUBCASE("manifest round-trips") {
        const CohortManifest back = read_manifest(tmp.path / "cohort" / "cohort.csv");
        REQUIRE(back.cases.size() == manifest.cases.size());
        for (std::size_t i = 0; i < back.cases.size(); ++i)
            CHECK(back.cases[i] == manifest.cases[i]);
    }

    SUBCASE("referenced volumes exist and load") {
        const CohortManifest back = read_manifest(tmp.path / "cohort" / "cohort.csv");
        for (const auto& e : back.cases) {
            CHECK(load_volume(back.resolve(e.image_path)).shape == p.shape);
            CHECK(load_mask(back.resolve(e.gt_path)).shape == p.shape);
            CHECK(load_volume(back.resolve(e.recon_path)).shape == p.shape);
            REQUIRE(e.sample_paths.size() == p.sample_count);
            CHECK(load_volume(back.resolve(e.sample_paths[0])).shape == p.shape);
        }
    }

    SUBCASE("identical params give a bit-identical cohort on disk") {
        generate_cohort(p, q, tmp.path / "cohort2");
        for (const auto& entry : std::filesystem::recursive_directory_iterator(tmp.path / "cohort")) {
            if (!entry.is_regular_file()) continue;
            const auto rel = std::filesystem::relative(entry.path(), tmp.path / "cohort");
            std::ifstream f1(entry.path(), std::ios::binary);
            std::ifstream f2(tmp.path / "cohort2" / rel, std::ios::binary);
            REQUIRE(f2.good());
            const std::string b1(std::istreambuf_iterator<char>(f1), {});
            const std::string b2(std::istreambuf_iterator<char>(f2), {});
            CHECK(b1 == b2);
        }
    }
}
