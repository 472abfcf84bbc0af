#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rtl/error.hpp"

namespace rtl {

// 8-bit interleaved RGB image, row-major from the top-left.
struct ImageU8 {
    std::size_t w = 0, h = 0;
    std::vector<std::uint8_t> rgb;  // h*w*3

    std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return rgb[(y * w + x) * 3 + c]; }
    std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return rgb[(y * w + x) * 3 + c]; }
};

void write_ppm(const std::string& path, const ImageU8& img);
ImageU8 read_ppm(const std::string& path);

// ASCII PGM with values min-max scaled to 0..255; constant input maps to 0.
void write_pgm_scaled(const std::string& path, const std::vector<double>& values, std::size_t h, std::size_t w);

}  // namespace rtl
