#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "rtl/error.hpp"
#include "rtl/tensor.hpp"

// Binary tensor format shared by checkpoints and dataset samples:
//   magic "RTLT", u8 version=1, u8 dtype (0=f32, 1=f64), u8 ndim,
//   little-endian u32 dims[ndim], little-endian raw values.
namespace rtl {

namespace detail {

inline void write_u32_le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff), static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

template <typename T>
void write_value_le(std::ostream& os, T v) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    }
    os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T read_value_le(std::istream& is) {
    unsigned char b[sizeof(T)];
    is.read(reinterpret_cast<char*>(b), sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    }
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

}  // namespace detail

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    os.write("RTLT", 4);
    const unsigned char version = 1;
    const unsigned char dtype = std::is_same_v<T, float> ? 0 : 1;
    const unsigned char ndim = static_cast<unsigned char>(t.ndim());
    require(t.ndim() <= 255, ErrorKind::shape, "tensor rank exceeds format limit");
    os.put(static_cast<char>(version));
    os.put(static_cast<char>(dtype));
    os.put(static_cast<char>(ndim));
    for (std::size_t d : t.shape()) {
        require(d <= 0xffffffffull, ErrorKind::shape, "tensor extent exceeds u32");
        detail::write_u32_le(os, static_cast<std::uint32_t>(d));
    }
    for (std::size_t i = 0; i < t.numel(); ++i) detail::write_value_le<T>(os, t[i]);
    require(os.good(), ErrorKind::data, "tensor write failed");
}

// Reads a tensor of either stored precision, converting to T if needed.
template <typename T>
Tensor<T> read_tensor(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    require(is.good() && std::memcmp(magic, "RTLT", 4) == 0, ErrorKind::data, "bad tensor magic");
    const int version = is.get();
    require(version == 1, ErrorKind::data, "unsupported tensor format version " + std::to_string(version));
    const int dtype = is.get();
    require(dtype == 0 || dtype == 1, ErrorKind::data, "unknown tensor dtype " + std::to_string(dtype));
    const int ndim = is.get();
    require(ndim >= 0, ErrorKind::data, "truncated tensor header");
    Dims shape(static_cast<std::size_t>(ndim));
    for (auto& d : shape) d = detail::read_u32_le(is);
    Tensor<T> out(shape);
    if (dtype == 0) {
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = static_cast<T>(detail::read_value_le<float>(is));
    } else {
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = static_cast<T>(detail::read_value_le<double>(is));
    }
    require(is.good(), ErrorKind::data, "truncated tensor payload");
    return out;
}

}  // namespace rtl
