#include <doctest.h>

#include <cmath>
#include <rtl/heatmap.hpp>
#include <rtl/rng.hpp>

using namespace rtl;

TEST_CASE("exhaustive round trip over every x4-aligned center in a 64x64 image") {
    // decode(encode(p)) == p for all grid-aligned landmarks; peak exactly 1.
    for (std::size_t y = 0; y < 64; y += kHeatmapStride)
        for (std::size_t x = 0; x < 64; x += kHeatmapStride) {
            const Landmarks in = {{static_cast<double>(x), static_cast<double>(y)}};
            auto maps = encode_heatmaps<double>(in, 64, 64, 1.5);
            const std::size_t hw = 16;
            const double peak = maps[((y / 4) * hw + (x / 4)) * 1 + 0];
            REQUIRE(peak == 1.0);
            const Landmarks out = decode_heatmaps(maps);
            REQUIRE(out.size() == 1);
            REQUIRE(out[0].x == static_cast<double>(x));
            REQUIRE(out[0].y == static_cast<double>(y));
        }
}

TEST_CASE("off-center neighbor values follow the Gaussian formula") {
    const double sigma = 1.5;
    auto maps = encode_heatmaps<double>({{32.0, 32.0}}, 64, 64, sigma);
    const std::size_t hw = 16;
    auto at = [&](std::size_t a, std::size_t b) { return maps[(a * hw + b)]; };
    // center cell (8,8); horizontal neighbor at distance 1 on the heatmap grid
    const double want1 = std::exp(-1.0 / (2.0 * sigma * sigma));
    CHECK(at(8, 9) == doctest::Approx(want1).epsilon(1e-9));
    CHECK(at(8, 7) == doctest::Approx(want1).epsilon(1e-9));
    CHECK(at(9, 8) == doctest::Approx(want1).epsilon(1e-9));
    CHECK(want1 == doctest::Approx(0.800737402916557).epsilon(1e-9));
    // diagonal neighbor, squared distance 2
    CHECK(at(9, 9) == doctest::Approx(std::exp(-2.0 / (2.0 * sigma * sigma))).epsilon(1e-9));
    // no truncation: the far corner is strictly positive
    CHECK(at(0, 0) > 0.0);
    CHECK(at(0, 0) == doctest::Approx(std::exp(-128.0 / (2.0 * sigma * sigma))).epsilon(1e-6));
}

TEST_CASE("non-aligned centers encode real-valued peaks and decode to the nearest-dominant cell") {
    // A landmark at (30,30) has heatmap center (7.5,7.5): four grid cells tie
    // at equal distance; the decode picks the smallest row-major index among
    // strictly-greater comparisons, i.e. cell (7,7) -> pixel (28,28).
    auto maps = encode_heatmaps<double>({{30.0, 30.0}}, 64, 64, 1.5);
    const Landmarks out = decode_heatmaps(maps);
    CHECK(out[0].x == 28.0);
    CHECK(out[0].y == 28.0);
    // peak value below 1 because no cell sits on the center
    double mx = 0;
    for (std::size_t i = 0; i < maps.numel(); ++i) mx = std::max(mx, maps[i]);
    CHECK(mx < 1.0);
    CHECK(mx == doctest::Approx(std::exp(-0.5 / (2.0 * 1.5 * 1.5))).epsilon(1e-9));
}

TEST_CASE("multi-landmark stacks are channel-last and independent") {
    Landmarks in = {{8.0, 4.0}, {40.0, 52.0}, {0.0, 0.0}};
    auto maps = encode_heatmaps<double>(in, 64, 64, 1.5);
    REQUIRE(maps.shape() == Dims{16, 16, 3});
    const Landmarks out = decode_heatmaps(maps);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(out[i].x == in[i].x);
        CHECK(out[i].y == in[i].y);
    }
    // channel 2's peak cell holds 1 for channel 2 but a tiny value for channel 0
    CHECK(maps[((0 * 16) + 0) * 3 + 2] == 1.0);
    CHECK(maps[((1 * 16) + 2) * 3 + 0] == 1.0);
}

TEST_CASE("constant map decodes to the origin (tie rule)") {
    Tensor<double> flat = Tensor<double>::full({8, 8, 2}, 0.25);
    const Landmarks out = decode_heatmaps(flat);
    for (const auto& p : out) {
        CHECK(p.x == 0.0);
        CHECK(p.y == 0.0);
    }
}

TEST_CASE("validation errors") {
    CHECK_THROWS_AS(encode_heatmaps<double>({{1.0, 1.0}}, 30, 64, 1.5), Error);   // not /4
    CHECK_THROWS_AS(encode_heatmaps<double>({{1.0, 1.0}}, 64, 64, 0.0), Error);   // sigma
    CHECK_THROWS_AS(encode_heatmaps<double>({}, 64, 64, 1.5), Error);             // empty
    CHECK_THROWS_AS(encode_heatmaps<double>({{64.0, 1.0}}, 64, 64, 1.5), Error);  // outside
    CHECK_THROWS_AS(encode_heatmaps<double>({{1.0, -0.5}}, 64, 64, 1.5), Error);
    try {
        encode_heatmaps<double>({{1.0, 1.0}, {70.0, 1.0}}, 64, 64, 1.5);
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("landmark 2") != std::string::npos);
        CHECK(e.kind() == ErrorKind::data);
    }
    CHECK_THROWS_AS(decode_heatmaps(Tensor<double>({4, 4})), Error);
}

TEST_CASE("sigma controls spread monotonically") {
    auto narrow = encode_heatmaps<double>({{32.0, 32.0}}, 64, 64, 1.0);
    auto wide = encode_heatmaps<double>({{32.0, 32.0}}, 64, 64, 3.0);
    // At the center both are 1; off-center the wide one dominates.
    const std::size_t hw = 16;
    CHECK(narrow[(8 * hw + 8)] == 1.0);
    CHECK(wide[(8 * hw + 8)] == 1.0);
    CHECK(wide[(8 * hw + 12)] > narrow[(8 * hw + 12)]);
}
