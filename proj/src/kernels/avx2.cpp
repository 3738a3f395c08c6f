// Compiled with -mavx2 -mfma; only reached after a runtime CPU probe.
#include "geopatch/kernels.hpp"

#include <immintrin.h>

namespace geopatch::kernels {
namespace {

// Same per-column accumulation order as the scalar kernel (i outer, bias
// last). float*float products are exact in double, so results are bitwise
// identical to the scalar reference. Sixteen columns stay in registers for the
// whole pass over x.
inline __m256d widen_lo(__m256 v) { return _mm256_cvtps_pd(_mm256_castps256_ps128(v)); }
inline __m256d widen_hi(__m256 v) { return _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)); }

inline void store_block(__m256d v, const float* bias, float* out) {
    if (bias) v = _mm256_add_pd(v, _mm256_cvtps_pd(_mm_loadu_ps(bias)));
    _mm_storeu_ps(out, _mm256_cvtpd_ps(v));
}

void affine_row(std::span<const float> x, std::span<const float> weight, std::span<const float> bias,
                std::span<float> out, std::span<double>) {
    const std::size_t cols = out.size();
    const std::size_t n = x.size();
    const float* w = weight.data();
    const float* b = bias.empty() ? nullptr : bias.data();
    std::size_t j = 0;
    for (; j + 16 <= cols; j += 16) {
        __m256d a0 = _mm256_setzero_pd(), a1 = a0, a2 = a0, a3 = a0;
        for (std::size_t i = 0; i < n; ++i) {
            const __m256d xv = _mm256_set1_pd(static_cast<double>(x[i]));
            const float* row = w + i * cols + j;
            const __m256 w0 = _mm256_loadu_ps(row);
            const __m256 w1 = _mm256_loadu_ps(row + 8);
            a0 = _mm256_add_pd(a0, _mm256_mul_pd(xv, widen_lo(w0)));
            a1 = _mm256_add_pd(a1, _mm256_mul_pd(xv, widen_hi(w0)));
            a2 = _mm256_add_pd(a2, _mm256_mul_pd(xv, widen_lo(w1)));
            a3 = _mm256_add_pd(a3, _mm256_mul_pd(xv, widen_hi(w1)));
        }
        store_block(a0, b ? b + j : nullptr, out.data() + j);
        store_block(a1, b ? b + j + 4 : nullptr, out.data() + j + 4);
        store_block(a2, b ? b + j + 8 : nullptr, out.data() + j + 8);
        store_block(a3, b ? b + j + 12 : nullptr, out.data() + j + 12);
    }
    for (; j + 4 <= cols; j += 4) {
        __m256d a = _mm256_setzero_pd();
        for (std::size_t i = 0; i < n; ++i) {
            const __m256d xv = _mm256_set1_pd(static_cast<double>(x[i]));
            a = _mm256_add_pd(a, _mm256_mul_pd(xv, _mm256_cvtps_pd(_mm_loadu_ps(w + i * cols + j))));
        }
        store_block(a, b ? b + j : nullptr, out.data() + j);
    }
    for (; j < cols; ++j) {
        double a = 0.0;
        for (std::size_t i = 0; i < n; ++i) a += static_cast<double>(x[i]) * static_cast<double>(w[i * cols + j]);
        out[j] = static_cast<float>(b ? a + static_cast<double>(b[j]) : a);
    }
}

double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// Four-lane partial sums: deterministic, but not the scalar summation order.
double dot(std::span<const float> a, std::span<const float> b) {
    const std::size_t n = a.size();
    __m256d s0 = _mm256_setzero_pd();
    __m256d s1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 av = _mm256_loadu_ps(a.data() + i);
        const __m256 bv = _mm256_loadu_ps(b.data() + i);
        s0 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(av)),
                             _mm256_cvtps_pd(_mm256_castps256_ps128(bv)), s0);
        s1 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(av, 1)),
                             _mm256_cvtps_pd(_mm256_extractf128_ps(bv, 1)), s1);
    }
    double sum = hsum(_mm256_add_pd(s0, s1));
    for (; i < n; ++i) sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return sum;
}

void axpy(double alpha, std::span<const float> x, std::span<double> acc) {
    const std::size_t n = x.size();
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d xv = _mm256_cvtps_pd(_mm_loadu_ps(x.data() + i));
        _mm256_storeu_pd(acc.data() + i, _mm256_fmadd_pd(av, xv, _mm256_loadu_pd(acc.data() + i)));
    }
    for (; i < n; ++i) acc[i] += alpha * static_cast<double>(x[i]);
}

} // namespace

const KernelTable* avx2_table() {
    static const KernelTable table{Isa::avx2, &affine_row, &dot, &axpy};
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported ? &table : nullptr;
}

} // namespace geopatch::kernels
