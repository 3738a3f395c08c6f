#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace geopatch {

// Dense row-major float matrix. Vectors are stored as a single row.
struct Tensor2 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;

    Tensor2() = default;
    Tensor2(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), data(r * c, fill) {}
    Tensor2(std::size_t r, std::size_t c, std::vector<float> values);

    std::span<float> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const float> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool empty() const { return data.empty(); }
    std::size_t size() const { return data.size(); }

    friend bool operator==(const Tensor2&, const Tensor2&) = default;
};

Tensor2 identity(std::size_t n);

// Largest |a - b| over all entries; shapes must match.
double max_abs_diff(const Tensor2& a, const Tensor2& b);
double max_abs_diff(std::span<const float> a, std::span<const float> b);

} // namespace geopatch
