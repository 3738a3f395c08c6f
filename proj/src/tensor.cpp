#include "geopatch/tensor.hpp"

#include "geopatch/error.hpp"

#include <cmath>

namespace geopatch {

Tensor2::Tensor2(std::size_t r, std::size_t c, std::vector<float> values)
    : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != rows * cols) {
        throw Error(ErrorKind::InvalidShape, "tensor data length " + std::to_string(data.size()) +
                                                 " does not match " + std::to_string(rows) + "x" +
                                                 std::to_string(cols));
    }
}

Tensor2 identity(std::size_t n) {
    Tensor2 t(n, n);
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0f;
    return t;
}

double max_abs_diff(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw Error(ErrorKind::InvalidShape, "max_abs_diff: length mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    }
    return worst;
}

double max_abs_diff(const Tensor2& a, const Tensor2& b) {
    if (a.rows != b.rows || a.cols != b.cols) throw Error(ErrorKind::InvalidShape, "max_abs_diff: shape mismatch");
    return max_abs_diff(std::span<const float>(a.data), std::span<const float>(b.data));
}

} // namespace geopatch
