#include <doctest.h>

#include <algorithm>
#include <random>

#include "segqc/qc_maps.hpp"
#include "test_support.hpp"

using namespace segqc;
using segqc_test::mask_of;
using segqc_test::volume_of;

TEST_CASE("mc_average") {
    SUBCASE("mean of identical maps is that map") {
        ProbabilityMap p = make_volume({2, 2, 1}, 0.3);
        SampleStack stack{{p, p, p}};
        CHECK(mc_average(stack).voxels == p.voxels);
    }

    SUBCASE("two maps at 0 and 1 average to 0.5") {
        SampleStack stack{{make_volume({2, 1, 1}, 0.0), make_volume({2, 1, 1}, 1.0)}};
        for (double v : mc_average(stack).voxels) CHECK(v == 0.5);
    }

    SUBCASE("a voxel true in 13 of 20 samples averages to 0.65") {
        // oracle: 13 * 1.0 / 20 = 0.65
        SampleStack stack;
        for (int i = 0; i < 20; ++i) stack.samples.push_back(make_volume({1, 1, 1}, i < 13 ? 1.0 : 0.0));
        CHECK(mc_average(stack).voxels[0] == 0.65);
    }

    SUBCASE("shape mismatch within the stack is rejected") {
        SampleStack stack{{make_volume({2, 1, 1}), make_volume({1, 2, 1})}};
        CHECK_THROWS_AS(mc_average(stack), std::invalid_argument);
    }

    SUBCASE("fewer than two samples is rejected") {
        SampleStack stack{{make_volume({1, 1, 1})}};
        CHECK_THROWS_AS(mc_average(stack), std::invalid_argument);
    }

    SUBCASE("permutation of the sample order leaves the mean unchanged") {
        std::mt19937_64 rng(17);
        SampleStack stack;
        for (int i = 0; i < 6; ++i) {
            ProbabilityMap p = make_volume({3, 2, 2});
            for (double& x : p.voxels) x = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            stack.samples.push_back(std::move(p));
        }
        const auto base = mc_average(stack).voxels;
        SampleStack shuffled = stack;
        std::reverse(shuffled.samples.begin(), shuffled.samples.end());
        std::swap(shuffled.samples[0], shuffled.samples[3]);
        const auto permuted = mc_average(shuffled).voxels;
        for (std::size_t i = 0; i < base.size(); ++i)
            CHECK(permuted[i] == doctest::Approx(base[i]).epsilon(1e-15));
    }
}

TEST_CASE("binary entropy") {
    CHECK(binary_entropy(0.5) == 1.0);  // exact
    CHECK(binary_entropy(0.0) == 0.0);
    CHECK(binary_entropy(1.0) == 0.0);
    // closed form: -(1/4)log2(1/4) - (3/4)log2(3/4)
    CHECK(binary_entropy(0.25) == doctest::Approx(0.8112781244591328).epsilon(1e-12));

    SUBCASE("H(p) = H(1-p)") {
        std::mt19937_64 rng(23);
        for (int i = 0; i < 10000; ++i) {
            const double p = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            CHECK(std::fabs(binary_entropy(p) - binary_entropy(1.0 - p)) <= 1e-12);
        }
        // When 1-p is exactly representable the symmetry is bit-exact.
        for (int k = 1; k < 1024; ++k) {
            const double p = static_cast<double>(k) / 1024.0;
            CHECK(binary_entropy(p) == binary_entropy(1.0 - p));
        }
    }

    SUBCASE("bounds: 0 <= H <= 1 with H = 1 only at 0.5") {
        std::mt19937_64 rng(29);
        for (int i = 0; i < 1000; ++i) {
            const double p = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            const double h = binary_entropy(p);
            CHECK(h >= 0.0);
            CHECK(h <= 1.0);
            if (std::fabs(p - 0.5) > 1e-6) CHECK(h < 1.0);
        }
    }

    SUBCASE("entropy_map applies per voxel and rejects out-of-range maps") {
        auto p = volume_of({3, 1, 1}, {0.0, 0.5, 1.0});
        const auto h = entropy_map(p);
        CHECK(h.voxels == std::vector<double>{0.0, 1.0, 0.0});
        auto bad = volume_of({1, 1, 1}, {1.2});
        CHECK_THROWS_AS(entropy_map(bad), std::invalid_argument);
    }
}

TEST_CASE("mask_out_lesions") {
    auto img = volume_of({4, 1, 1}, {1.0, 2.0, 3.0, 4.0});

    SUBCASE("all-false mask leaves the image unchanged") {
        CHECK(mask_out_lesions(img, make_mask({4, 1, 1}, false)).voxels == img.voxels);
    }
    SUBCASE("all-true mask zeroes everything") {
        for (double v : mask_out_lesions(img, make_mask({4, 1, 1}, true)).voxels) CHECK(v == 0.0);
    }
    SUBCASE("mixed mask zeroes exactly the marked voxels") {
        auto m = mask_of({4, 1, 1}, {0, 1, 0, 1});
        CHECK(mask_out_lesions(img, m).voxels == std::vector<double>{1.0, 0.0, 3.0, 0.0});
    }
    SUBCASE("shape mismatch is rejected") {
        CHECK_THROWS_AS(mask_out_lesions(img, make_mask({2, 2, 1})), std::invalid_argument);
    }
}

TEST_CASE("error_map") {
    SUBCASE("identical inputs give an all-zero map") {
        auto a = volume_of({2, 1, 1}, {0.25, 0.75});
        for (double v : error_map(a, a).voxels) CHECK(v == 0.0);
    }
    SUBCASE("signed difference is preserved") {
        auto orig = volume_of({1, 1, 1}, {1.0});
        auto rec = volume_of({1, 1, 1}, {0.25});
        CHECK(error_map(orig, rec).voxels[0] == 0.75);
    }
    SUBCASE("a uniformly brighter reconstruction makes the sum negative") {
        ScalarVolume orig = make_volume({3, 3, 3}, 0.4);
        ScalarVolume rec = make_volume({3, 3, 3}, 0.9);
        const ErrorMap em = error_map(orig, rec);
        for (double v : em.voxels) CHECK(v < 0.0);
        CHECK(voxelwise_sum(em) < 0.0);
    }
    SUBCASE("antisymmetry: error_map(a,b) = -error_map(b,a)") {
        std::mt19937_64 rng(31);
        ScalarVolume a = make_volume({3, 2, 2}), b = make_volume({3, 2, 2});
        for (double& x : a.voxels) x = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        for (double& x : b.voxels) x = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        const auto ab = error_map(a, b), ba = error_map(b, a);
        for (std::size_t i = 0; i < ab.voxels.size(); ++i)
            CHECK(ab.voxels[i] == -ba.voxels[i]);
    }
}

TEST_CASE("voxelwise_sum") {
    CHECK(voxelwise_sum(make_volume({2, 2, 2}, 0.0)) == 0.0);
    CHECK(voxelwise_sum(make_volume({2, 2, 2}, 1.0)) == 8.0);

    SUBCASE("matches a naive sequential oracle on a 32^3 entropy map") {
        std::mt19937_64 rng(37);
        ProbabilityMap p = make_volume({32, 32, 32});
        for (double& x : p.voxels) x = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        const UncertaintyMap h = entropy_map(p);
        double naive = 0.0;
        for (double v : h.voxels) naive += v;
        const double compensated = voxelwise_sum(h);
        CHECK(std::fabs(compensated - naive) <= 1e-9 * std::fabs(naive));
    }

    SUBCASE("absolute_map flips signs only") {
        auto m = volume_of({3, 1, 1}, {-1.5, 0.0, 2.0});
        CHECK(absolute_map(m).voxels == std::vector<double>{1.5, 0.0, 2.0});
    }
}
