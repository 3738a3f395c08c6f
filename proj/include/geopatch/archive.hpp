#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

// Reader/writer for the safetensors container: an 8-byte little-endian header
// length N, N bytes of JSON ({name: {dtype, shape, data_offsets}}), then the
// raw little-endian payload. F16 and BF16 tensors are widened to F32 on read.
namespace geopatch::archive {

enum class Dtype { f32, f16, bf16 };

struct Entry {
    std::vector<std::size_t> shape;
    std::vector<float> values;
};

using Entries = std::map<std::string, Entry>;

Entries read(std::istream& in);
Entries read(const std::filesystem::path& path);

void write(std::ostream& out, const Entries& entries, Dtype dtype = Dtype::f32);
void write(const std::filesystem::path& path, const Entries& entries, Dtype dtype = Dtype::f32);

float half_to_float(std::uint16_t h);
std::uint16_t float_to_half(float f);
float bfloat16_to_float(std::uint16_t b);
std::uint16_t float_to_bfloat16(float f);

} // namespace geopatch::archive
