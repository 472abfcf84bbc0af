#include "rtl/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>

namespace rtl {

void write_ppm(const std::string& path, const ImageU8& img) {
    require(img.w > 0 && img.h > 0 && img.rgb.size() == img.w * img.h * 3, ErrorKind::data,
            "write_ppm: malformed image");
    std::ofstream os(path, std::ios::binary);
    require(os.good(), ErrorKind::data, "cannot write image '" + path + "'");
    os << "P6\n" << img.w << " " << img.h << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    require(os.good(), ErrorKind::data, "write failed for image '" + path + "'");
}

namespace {
// Reads the next PPM header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& is) {
    std::string tok;
    int ch;
    while ((ch = is.get()) != EOF) {
        if (ch == '#') {
            while ((ch = is.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}
}  // namespace

ImageU8 read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), ErrorKind::data, "cannot open image '" + path + "'");
    require(next_token(is) == "P6", ErrorKind::data, "'" + path + "' is not a binary PPM (P6)");
    ImageU8 img;
    try {
        img.w = std::stoul(next_token(is));
        img.h = std::stoul(next_token(is));
        const unsigned long maxval = std::stoul(next_token(is));
        require(maxval == 255, ErrorKind::data, "'" + path + "': only maxval 255 is supported");
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        throw_data("'" + path + "': malformed PPM header");
    }
    require(img.w > 0 && img.h > 0, ErrorKind::data, "'" + path + "': empty image");
    img.rgb.resize(img.w * img.h * 3);
    is.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    require(is.gcount() == static_cast<std::streamsize>(img.rgb.size()), ErrorKind::data,
            "'" + path + "': truncated pixel data");
    return img;
}

void write_pgm_scaled(const std::string& path, const std::vector<double>& values, std::size_t h, std::size_t w) {
    require(h > 0 && w > 0 && values.size() == h * w, ErrorKind::data, "write_pgm_scaled: extent mismatch");
    double lo = values[0], hi = values[0];
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi - lo;
    std::ofstream os(path, std::ios::binary);
    require(os.good(), ErrorKind::data, "cannot write image '" + path + "'");
    os << "P2\n" << w << " " << h << "\n255\n";
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            int g = 0;
            if (span > 0.0) g = static_cast<int>(std::lround((values[y * w + x] - lo) / span * 255.0));
            g = std::clamp(g, 0, 255);
            os << g << (x + 1 == w ? "" : " ");
        }
        os << "\n";
    }
    require(os.good(), ErrorKind::data, "write failed for image '" + path + "'");
}

}  // namespace rtl
