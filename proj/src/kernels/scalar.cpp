#include "geopatch/kernels.hpp"

namespace geopatch::kernels {
namespace {

void affine_row(std::span<const float> x, std::span<const float> weight, std::span<const float> bias,
                std::span<float> out, std::span<double> acc) {
    const std::size_t cols = out.size();
    for (std::size_t j = 0; j < cols; ++j) acc[j] = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        const float* w = weight.data() + i * cols;
        for (std::size_t j = 0; j < cols; ++j) acc[j] += xi * static_cast<double>(w[j]);
    }
    if (bias.empty()) {
        for (std::size_t j = 0; j < cols; ++j) out[j] = static_cast<float>(acc[j]);
    } else {
        for (std::size_t j = 0; j < cols; ++j) out[j] = static_cast<float>(acc[j] + static_cast<double>(bias[j]));
    }
}

double dot(std::span<const float> a, std::span<const float> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return sum;
}

void axpy(double alpha, std::span<const float> x, std::span<double> acc) {
    for (std::size_t i = 0; i < x.size(); ++i) acc[i] += alpha * static_cast<double>(x[i]);
}

} // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{Isa::scalar, &affine_row, &dot, &axpy};
    return table;
}

} // namespace geopatch::kernels
