#include "geopatch/kernels.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace geopatch::kernels;

namespace {

std::vector<const KernelTable*> variants() {
    std::vector<const KernelTable*> out;
    if (const auto* t = avx2_table()) out.push_back(t);
    if (const auto* t = neon_table()) out.push_back(t);
    return out;
}

std::vector<float> random_vec(std::mt19937& rng, std::size_t n) {
    std::normal_distribution<float> g(0, 1);
    std::vector<float> v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

} // namespace

TEST(Kernels, ScalarReference) {
    const std::vector<float> x{1, 2}, w{1, 2, 3, 4, 5, 6}, b{0.5f, 0, -1};
    std::vector<float> out(3);
    std::vector<double> acc(3);
    scalar_table().affine_row(x, w, b, out, acc);
    EXPECT_EQ(out, (std::vector<float>{9.5f, 12, 14}));
    EXPECT_EQ(scalar_table().dot(x, std::vector<float>{3, 4}), 11.0);
    std::vector<double> y{1, 1};
    scalar_table().axpy(2.0, x, y);
    EXPECT_EQ(y, (std::vector<double>{3, 5}));
}

TEST(Kernels, ActiveIsKnown) {
    const auto& t = active();
    EXPECT_NE(t.affine_row, nullptr);
    EXPECT_FALSE(to_string(t.isa).empty());
}

TEST(KernelEquivalence, AffineIsBitwiseScalar) {
    std::mt19937 rng(3);
    for (const auto* simd : variants()) {
        for (std::size_t in : {1u, 3u, 8u, 17u, 64u}) {
            for (std::size_t cols : {1u, 4u, 5u, 8u, 13u, 33u}) {
                const auto x = random_vec(rng, in), w = random_vec(rng, in * cols), b = random_vec(rng, cols);
                std::vector<float> ref(cols), got(cols);
                std::vector<double> acc(cols);
                scalar_table().affine_row(x, w, b, ref, acc);
                simd->affine_row(x, w, b, got, acc);
                EXPECT_EQ(ref, got) << to_string(simd->isa) << " in=" << in << " cols=" << cols;
                scalar_table().affine_row(x, w, {}, ref, acc);
                simd->affine_row(x, w, {}, got, acc);
                EXPECT_EQ(ref, got);
            }
        }
    }
}

TEST(KernelEquivalence, DotAndAxpyWithinTolerance) {
    std::mt19937 rng(4);
    for (const auto* simd : variants()) {
        for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 9u, 31u, 256u, 1001u}) {
            const auto a = random_vec(rng, n), b = random_vec(rng, n);
            const double ref = scalar_table().dot(a, b), got = simd->dot(a, b);
            EXPECT_NEAR(ref, got, 1e-12 * std::max<double>(1.0, static_cast<double>(n))) << n;
            std::vector<double> y0(n, 0.25), y1(n, 0.25);
            scalar_table().axpy(0.3, a, y0);
            simd->axpy(0.3, a, y1);
            for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y0[i], y1[i], 1e-15);
        }
    }
}
