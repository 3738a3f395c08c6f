#include "geopatch/archive.hpp"
#include "geopatch/error.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <sstream>

using namespace geopatch;
namespace ar = geopatch::archive;

namespace {

std::string raw_archive(const std::string& header, const std::string& payload) {
    std::string out(8, '\0');
    std::uint64_t n = header.size();
    for (int i = 0; i < 8; ++i) out[i] = static_cast<char>((n >> (8 * i)) & 0xff);
    return out + header + payload;
}

ErrorKind read_error(const std::string& bytes) {
    std::istringstream in(bytes);
    try {
        ar::read(in);
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "archive accepted";
    return ErrorKind::Io;
}

} // namespace

TEST(Archive, SixtyFourByteHeader) {
    std::string header = R"({"x":{"dtype":"F32","shape":[2],"data_offsets":[0,8]}})";
    header.resize(64, ' ');
    float vals[2] = {1.5f, -2.0f};
    std::string payload(8, '\0');
    std::memcpy(payload.data(), vals, 8);
    const auto bytes = raw_archive(header, payload);
    EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 0x40);
    std::istringstream in(bytes);
    const auto e = ar::read(in);
    ASSERT_EQ(e.size(), 1u);
    EXPECT_EQ(e.at("x").shape, std::vector<std::size_t>{2});
    EXPECT_EQ(e.at("x").values, (std::vector<float>{1.5f, -2.0f}));
}

TEST(Archive, MetadataKeyIgnored) {
    const std::string header = R"({"__metadata__":{"format":"pt"},"s":{"dtype":"F32","shape":[],"data_offsets":[0,4]}})";
    std::string payload(4, '\0');
    const float v = 3.0f;
    std::memcpy(payload.data(), &v, 4);
    std::istringstream in(raw_archive(header, payload));
    const auto e = ar::read(in);
    ASSERT_EQ(e.size(), 1u);
    EXPECT_EQ(e.at("s").values, std::vector<float>{3.0f});
}

TEST(Archive, RoundTripAllDtypes) {
    ar::Entries entries;
    entries["a"] = {{2, 3}, {0.0f, 1.0f, -2.5f, 0.125f, 65504.0f, -0.0f}};
    entries["b"] = {{4}, {1.0f, 2.0f, 3.0f, 4.0f}};
    for (auto dtype : {ar::Dtype::f32, ar::Dtype::f16, ar::Dtype::bf16}) {
        std::stringstream buf;
        ar::write(buf, entries, dtype);
        const std::string bytes = buf.str();
        std::uint64_t n = 0;
        for (int i = 7; i >= 0; --i) n = (n << 8) | static_cast<unsigned char>(bytes[i]);
        EXPECT_EQ(n % 8, 0u);
        std::istringstream in(bytes);
        const auto back = ar::read(in);
        ASSERT_EQ(back.size(), 2u);
        EXPECT_EQ(back.at("a").shape, entries["a"].shape);
        if (dtype == ar::Dtype::bf16) {
            EXPECT_EQ(back.at("b").values, entries["b"].values);
        } else {
            EXPECT_EQ(back.at("a").values, entries["a"].values);
        }
    }
}

TEST(Archive, HalfConversions) {
    EXPECT_EQ(ar::half_to_float(0x3c00), 1.0f);
    EXPECT_EQ(ar::half_to_float(0xc000), -2.0f);
    EXPECT_EQ(ar::half_to_float(0x7bff), 65504.0f);
    EXPECT_EQ(ar::half_to_float(0x0001), std::ldexp(1.0f, -24));
    EXPECT_TRUE(std::isinf(ar::half_to_float(0x7c00)));
    EXPECT_TRUE(std::isnan(ar::half_to_float(0x7e00)));
    EXPECT_EQ(ar::float_to_half(1.0f), 0x3c00);
    EXPECT_EQ(ar::float_to_half(1.0f + std::ldexp(1.0f, -11)), 0x3c00); // tie rounds to even
    EXPECT_EQ(ar::bfloat16_to_float(0x3f80), 1.0f);
    EXPECT_EQ(ar::float_to_bfloat16(1.0f), 0x3f80);
    for (std::uint32_t h = 0; h < 0x7c00; ++h) EXPECT_EQ(ar::float_to_half(ar::half_to_float(static_cast<std::uint16_t>(h))), h);
}

TEST(Archive, Malformed) {
    EXPECT_EQ(read_error("abc"), ErrorKind::MalformedArchive);
    EXPECT_EQ(read_error(raw_archive("{}", "").substr(0, 9)), ErrorKind::MalformedArchive);
    EXPECT_EQ(read_error(raw_archive("not json", "")), ErrorKind::MalformedArchive);
    EXPECT_EQ(read_error(raw_archive(R"({"x":{"dtype":"I64","shape":[1],"data_offsets":[0,8]}})", std::string(8, '\0'))),
              ErrorKind::MalformedArchive);
    EXPECT_EQ(read_error(raw_archive(R"({"x":{"dtype":"F32","shape":[4],"data_offsets":[0,16]}})", std::string(8, '\0'))),
              ErrorKind::MalformedArchive);
    EXPECT_EQ(read_error(raw_archive(R"({"x":{"dtype":"F32","shape":[3],"data_offsets":[0,8]}})", std::string(8, '\0'))),
              ErrorKind::MalformedArchive);
}
