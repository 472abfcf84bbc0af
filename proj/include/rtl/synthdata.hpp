#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rtl/dataset.hpp"
#include "rtl/heatmap.hpp"
#include "rtl/image_io.hpp"

namespace rtl {

enum class DatasetVariant { faces, textures };

inline DatasetVariant dataset_variant_from_name(const std::string& s) {
    if (s == "faces") return DatasetVariant::faces;
    if (s == "textures") return DatasetVariant::textures;
    throw_config("unknown dataset variant '" + s + "' (expected faces or textures)");
}

// Geometry of one procedural face in a rotated face-centered frame
// (units: pixels, y down). The 14 landmarks derive from these values
// analytically, so ground truth is exact by construction.
struct FaceParams {
    double cx = 0, cy = 0;    // face center in image coords
    double theta = 0;         // rotation, radians, |theta| <= 10 deg
    double head_a = 0, head_b = 0;
    double eye_dx = 0, eye_dy = 0;   // eye centers at (+-eye_dx, -eye_dy)
    double eye_w = 0, eye_h = 0;     // eye ellipse semi-axes
    double iris_r = 0;
    double nose_base_y = 0;          // L8 at (0, nose_base_y)
    double nose_half_w = 0, nose_h = 0;
    double philtrum_dx = 0;          // crista philtri at x = +-philtrum_dx
    double mouth_y = 0;              // vertical center of the lip lens
    double mouth_half_w = 0;         // cheilions at x = +-mouth_half_w
    double lip_up = 0, lip_down = 0; // parabola peak offsets of the lip edges
    double sublabiale_gap = 0;       // L14 below the lower lip edge
    std::uint64_t detail_seed = 0;   // drives non-geometric nuisance detail (clutter, noise)
    double skin[3] = {0, 0, 0};      // palette
    double lip_color[3] = {0, 0, 0};
    double iris_color[3] = {0, 0, 0};
    double bg_top[3] = {0, 0, 0};
    double bg_bottom[3] = {0, 0, 0};
    int identity_class = 0;
};

// Deterministic per-sample parameters: class-specific means (from the
// dataset seed and class id) plus per-sample jitter (from the seed and
// sample index).
FaceParams face_params_for(std::uint64_t seed, std::size_t index, int identity_class, std::size_t image_size);

// The 14 landmark positions implied by the parameters, ordered:
// 1 outer left eye corner, 2 inner left, 3 inner right, 4 outer right,
// 5 left eye center, 6 right eye center, 7 left crista philtri,
// 8 nose base, 9 right crista philtri, 10 labiale superius,
// 11 left cheilion, 12 right cheilion, 13 labiale inferius, 14 sublabiale.
// "Left"/"right" are image sides, which is what makes the horizontal-flip
// permutation exact.
Landmarks face_landmarks(const FaceParams& p);

// Role reindexing under horizontal mirror (0-based, an involution).
std::vector<std::size_t> face_flip_permutation();

ImageU8 render_face(const FaceParams& p, std::size_t image_size);
ImageU8 render_texture(std::uint64_t seed, std::size_t index, int texture_class, std::size_t image_size);

// Writes manifest.json, images/, landmarks/ (faces only) and labels.csv.
DatasetManifest generate_dataset(const std::string& out_dir, std::size_t n, std::size_t image_size, std::size_t c,
                                 std::uint64_t seed, DatasetVariant variant);

}  // namespace rtl
