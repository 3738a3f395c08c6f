#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Inner-loop kernels for the forward pass. Every kernel accumulates in double.
// Variants are selected once at startup (CPU feature probe, overridable with
// GEOPATCH_KERNELS=scalar|avx2|neon) and stay fixed for the process, so two
// runs in one process always take the same arithmetic path.
namespace geopatch::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view to_string(Isa isa);

// out[j] = bias[j] + sum_i x[i] * weight[i * out.size() + j]
// weight is row-major [x.size(), out.size()]; bias is empty or out.size().
// acc is caller-owned scratch of at least out.size() doubles.
using AffineRowFn = void (*)(std::span<const float> x, std::span<const float> weight,
                             std::span<const float> bias, std::span<float> out, std::span<double> acc);

// sum_i a[i] * b[i]
using DotFn = double (*)(std::span<const float> a, std::span<const float> b);

// acc[i] += alpha * x[i]
using AxpyFn = void (*)(double alpha, std::span<const float> x, std::span<double> acc);

struct KernelTable {
    Isa isa;
    AffineRowFn affine_row;
    DotFn dot;
    AxpyFn axpy;
};

const KernelTable& scalar_table();

// nullptr when the variant was not compiled in or the CPU lacks the feature.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// The table used by numerics and the model.
const KernelTable& active();

} // namespace geopatch::kernels
