#include "geopatch/archive.hpp"

#include "geopatch/error.hpp"

#include "json.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>

namespace geopatch::archive {
namespace {

std::size_t dtype_size(const std::string& dtype) {
    if (dtype == "F32") return 4;
    if (dtype == "F16" || dtype == "BF16") return 2;
    return 0;
}

std::uint64_t read_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

std::uint16_t read_u16_le(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

} // namespace

float half_to_float(std::uint16_t h) {
    const std::uint32_t sign = (h & 0x8000u) << 16;
    std::uint32_t exp = (h >> 10) & 0x1Fu;
    std::uint32_t mant = h & 0x3FFu;
    std::uint32_t bits;
    if (exp == 0) {
        if (mant == 0) {
            bits = sign;
        } else {
            exp = 127 - 15 + 1;
            while ((mant & 0x400u) == 0) {
                mant <<= 1;
                --exp;
            }
            mant &= 0x3FFu;
            bits = sign | (exp << 23) | (mant << 13);
        }
    } else if (exp == 0x1F) {
        bits = sign | 0x7F800000u | (mant << 13);
    } else {
        bits = sign | ((exp + 127 - 15) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(bits);
}

// Round-to-nearest-even; overflow saturates to infinity.
std::uint16_t float_to_half(float f) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
    const std::uint32_t sign = (bits >> 16) & 0x8000u;
    const std::int32_t exp = static_cast<std::int32_t>((bits >> 23) & 0xFF) - 127 + 15;
    std::uint32_t mant = bits & 0x7FFFFFu;
    if (((bits >> 23) & 0xFF) == 0xFF) return static_cast<std::uint16_t>(sign | 0x7C00u | (mant ? 0x200u : 0u));
    if (exp >= 0x1F) return static_cast<std::uint16_t>(sign | 0x7C00u);
    if (exp <= 0) {
        if (exp < -10) return static_cast<std::uint16_t>(sign);
        mant |= 0x800000u;
        const int shift = 14 - exp;
        std::uint32_t half = mant >> shift;
        const std::uint32_t rem = mant & ((1u << shift) - 1);
        const std::uint32_t mid = 1u << (shift - 1);
        if (rem > mid || (rem == mid && (half & 1u))) ++half;
        return static_cast<std::uint16_t>(sign | half);
    }
    std::uint32_t half = (static_cast<std::uint32_t>(exp) << 10) | (mant >> 13);
    const std::uint32_t rem = mant & 0x1FFFu;
    if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;
    return static_cast<std::uint16_t>(sign | half);
}

float bfloat16_to_float(std::uint16_t b) { return std::bit_cast<float>(static_cast<std::uint32_t>(b) << 16); }

std::uint16_t float_to_bfloat16(float f) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
    if ((bits & 0x7F800000u) == 0x7F800000u && (bits & 0x7FFFFFu)) return static_cast<std::uint16_t>((bits >> 16) | 0x40u);
    const std::uint32_t rounding = 0x7FFFu + ((bits >> 16) & 1u);
    return static_cast<std::uint16_t>((bits + rounding) >> 16);
}

Entries read(std::istream& in) {
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 8) throw Error(ErrorKind::MalformedArchive, "archive shorter than its 8-byte header length");
    const std::uint64_t header_len = read_u64_le(bytes.data());
    if (header_len > bytes.size() - 8) {
        throw Error(ErrorKind::MalformedArchive, "header length " + std::to_string(header_len) +
                                                     " exceeds file size " + std::to_string(bytes.size()));
    }
    const std::size_t data_start = 8 + static_cast<std::size_t>(header_len);
    const std::size_t payload = bytes.size() - data_start;

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + static_cast<std::ptrdiff_t>(data_start));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::MalformedArchive, std::string("archive header: ") + e.what());
    }
    if (!header.is_object()) throw Error(ErrorKind::MalformedArchive, "archive header is not a JSON object");

    Entries out;
    for (const auto& [name, info] : header.items()) {
        if (name == "__metadata__") continue;
        try {
            const auto dtype = info.at("dtype").get<std::string>();
            const std::size_t width = dtype_size(dtype);
            if (width == 0) throw Error(ErrorKind::MalformedArchive, "tensor '" + name + "' has unsupported dtype " + dtype);
            Entry e;
            e.shape = info.at("shape").get<std::vector<std::size_t>>();
            const auto offsets = info.at("data_offsets").get<std::vector<std::size_t>>();
            std::size_t count = 1;
            for (const auto d : e.shape) count *= d;
            if (offsets.size() != 2 || offsets[0] > offsets[1] || offsets[1] > payload ||
                offsets[1] - offsets[0] != count * width) {
                throw Error(ErrorKind::MalformedArchive, "tensor '" + name + "' has a byte range inconsistent with "
                                                         "its shape or the payload size (truncated file?)");
            }
            const unsigned char* p = bytes.data() + data_start + offsets[0];
            e.values.resize(count);
            for (std::size_t i = 0; i < count; ++i) {
                if (width == 4) {
                    e.values[i] = std::bit_cast<float>(read_u32_le(p + 4 * i));
                } else if (dtype == "F16") {
                    e.values[i] = half_to_float(read_u16_le(p + 2 * i));
                } else {
                    e.values[i] = bfloat16_to_float(read_u16_le(p + 2 * i));
                }
            }
            out.emplace(name, std::move(e));
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorKind::MalformedArchive, "tensor '" + name + "': " + ex.what());
        }
    }
    return out;
}

Entries read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return read(in);
}

void write(std::ostream& out, const Entries& entries, Dtype dtype) {
    const std::size_t width = dtype == Dtype::f32 ? 4 : 2;
    const char* dtype_name = dtype == Dtype::f32 ? "F32" : (dtype == Dtype::f16 ? "F16" : "BF16");

    nlohmann::ordered_json header = nlohmann::ordered_json::object();
    std::size_t offset = 0;
    for (const auto& [name, e] : entries) {
        const std::size_t n = e.values.size() * width;
        header[name] = {{"dtype", dtype_name}, {"shape", e.shape}, {"data_offsets", {offset, offset + n}}};
        offset += n;
    }
    std::string text = header.dump();
    while ((text.size() + 8) % 8 != 0) text += ' ';

    unsigned char len[8];
    std::uint64_t n = text.size();
    for (auto& b : len) {
        b = static_cast<unsigned char>(n & 0xFF);
        n >>= 8;
    }
    out.write(reinterpret_cast<const char*>(len), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));

    std::vector<unsigned char> buf;
    for (const auto& [name, e] : entries) {
        buf.clear();
        for (const float v : e.values) {
            if (width == 4) {
                const auto bits = std::bit_cast<std::uint32_t>(v);
                for (int k = 0; k < 4; ++k) buf.push_back(static_cast<unsigned char>(bits >> (8 * k)));
            } else {
                const std::uint16_t h = dtype == Dtype::f16 ? float_to_half(v) : float_to_bfloat16(v);
                buf.push_back(static_cast<unsigned char>(h & 0xFF));
                buf.push_back(static_cast<unsigned char>(h >> 8));
            }
        }
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    if (!out) throw Error(ErrorKind::Io, "failed writing tensor archive");
}

void write(const std::filesystem::path& path, const Entries& entries, Dtype dtype) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    write(out, entries, dtype);
}

} // namespace geopatch::archive
