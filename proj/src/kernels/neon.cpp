// AArch64 only. Advanced SIMD is mandatory there, so no runtime probe.
#include "geopatch/kernels.hpp"

#include <arm_neon.h>

namespace geopatch::kernels {
namespace {

void affine_row(std::span<const float> x, std::span<const float> weight, std::span<const float> bias,
                std::span<float> out, std::span<double> acc) {
    const std::size_t cols = out.size();
    double* a = acc.data();
    for (std::size_t j = 0; j < cols; ++j) a[j] = 0.0;

    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        const float64x2_t xv = vdupq_n_f64(xi);
        const float* w = weight.data() + i * cols;
        std::size_t j = 0;
        for (; j + 4 <= cols; j += 4) {
            const float32x4_t wv = vld1q_f32(w + j);
            const float64x2_t lo = vcvt_f64_f32(vget_low_f32(wv));
            const float64x2_t hi = vcvt_high_f64_f32(wv);
            vst1q_f64(a + j, vaddq_f64(vld1q_f64(a + j), vmulq_f64(xv, lo)));
            vst1q_f64(a + j + 2, vaddq_f64(vld1q_f64(a + j + 2), vmulq_f64(xv, hi)));
        }
        for (; j < cols; ++j) a[j] += xi * static_cast<double>(w[j]);
    }
    for (std::size_t j = 0; j < cols; ++j) {
        out[j] = static_cast<float>(bias.empty() ? a[j] : a[j] + static_cast<double>(bias[j]));
    }
}

double dot(std::span<const float> a, std::span<const float> b) {
    const std::size_t n = a.size();
    float64x2_t s0 = vdupq_n_f64(0.0);
    float64x2_t s1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const float32x4_t av = vld1q_f32(a.data() + i);
        const float32x4_t bv = vld1q_f32(b.data() + i);
        s0 = vfmaq_f64(s0, vcvt_f64_f32(vget_low_f32(av)), vcvt_f64_f32(vget_low_f32(bv)));
        s1 = vfmaq_f64(s1, vcvt_high_f64_f32(av), vcvt_high_f64_f32(bv));
    }
    double sum = vaddvq_f64(vaddq_f64(s0, s1));
    for (; i < n; ++i) sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return sum;
}

void axpy(double alpha, std::span<const float> x, std::span<double> acc) {
    const std::size_t n = x.size();
    const float64x2_t av = vdupq_n_f64(alpha);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t xv = vcvt_f64_f32(vld1_f32(x.data() + i));
        vst1q_f64(acc.data() + i, vfmaq_f64(vld1q_f64(acc.data() + i), av, xv));
    }
    for (; i < n; ++i) acc[i] += alpha * static_cast<double>(x[i]);
}

} // namespace

const KernelTable* neon_table() {
    static const KernelTable table{Isa::neon, &affine_row, &dot, &axpy};
    return &table;
}

} // namespace geopatch::kernels
