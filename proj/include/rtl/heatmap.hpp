#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "rtl/error.hpp"
#include "rtl/tensor.hpp"

namespace rtl {

// Landmark position in input-pixel units: x is the column, y is the row,
// origin at the top-left.
struct Landmark {
    double x = 0.0;
    double y = 0.0;
};

using Landmarks = std::vector<Landmark>;

inline constexpr std::size_t kHeatmapStride = 4;  // heatmaps live on a 1/4-resolution grid

// One Gaussian map per landmark, stacked channel-last: [H/4, W/4, K].
// Centers are the real-valued downscaled coordinates (x/4, y/4); the full
// map is evaluated with no truncation radius, so values are strictly
// positive and peak at exactly 1 when the landmark lies on the x4 grid.
template <typename T>
Tensor<T> encode_heatmaps(const Landmarks& landmarks, std::size_t h, std::size_t w, double sigma) {
    require(h % kHeatmapStride == 0 && w % kHeatmapStride == 0, ErrorKind::shape,
            "encode_heatmaps: image extent must be divisible by 4");
    require(sigma > 0.0, ErrorKind::config, "encode_heatmaps: sigma must be positive");
    require(!landmarks.empty(), ErrorKind::data, "encode_heatmaps: empty landmark set");
    const std::size_t hh = h / kHeatmapStride, hw = w / kHeatmapStride;
    const std::size_t k = landmarks.size();
    Tensor<T> maps({hh, hw, k});
    const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
    for (std::size_t i = 0; i < k; ++i) {
        const Landmark& p = landmarks[i];
        require(p.x >= 0.0 && p.x < static_cast<double>(w) && p.y >= 0.0 && p.y < static_cast<double>(h),
                ErrorKind::data,
                "encode_heatmaps: landmark " + std::to_string(i + 1) + " outside the image");
        const double cx = p.x / kHeatmapStride;
        const double cy = p.y / kHeatmapStride;
        for (std::size_t a = 0; a < hh; ++a) {
            const double dy = static_cast<double>(a) - cy;
            for (std::size_t b = 0; b < hw; ++b) {
                const double dx = static_cast<double>(b) - cx;
                maps[(a * hw + b) * k + i] = static_cast<T>(std::exp(-(dx * dx + dy * dy) * inv_two_sigma2));
            }
        }
    }
    return maps;
}

// Per-map argmax scaled back to input-pixel units. Ties resolve to the
// smallest row-major cell index, so a constant map decodes to (0,0).
template <typename T>
Landmarks decode_heatmaps(const Tensor<T>& maps) {
    require(maps.ndim() == 3, ErrorKind::shape, "decode_heatmaps: expected [H,W,K]");
    const std::size_t hh = maps.dim(0), hw = maps.dim(1), k = maps.dim(2);
    Landmarks out(k);
    for (std::size_t i = 0; i < k; ++i) {
        T best = maps[i];
        std::size_t best_a = 0, best_b = 0;
        for (std::size_t a = 0; a < hh; ++a)
            for (std::size_t b = 0; b < hw; ++b) {
                const T v = maps[(a * hw + b) * k + i];
                if (v > best) {
                    best = v;
                    best_a = a;
                    best_b = b;
                }
            }
        out[i].x = static_cast<double>(best_b * kHeatmapStride);
        out[i].y = static_cast<double>(best_a * kHeatmapStride);
    }
    return out;
}

}  // namespace rtl
