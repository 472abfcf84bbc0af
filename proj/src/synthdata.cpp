#include "rtl/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "rtl/rng.hpp"

namespace rtl {

namespace {

constexpr std::uint64_t kClassStream = 11;
constexpr std::uint64_t kSampleStream = 12;
constexpr std::uint64_t kSplitStream = 13;
constexpr std::uint64_t kDetailStream = 14;

constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
    double x = 0, y = 0;
};

// A value with a class-specific mean and a per-sample jitter radius, all
// in units of the image size.
struct ParamRange {
    double lo, hi, jitter;
    double mean(Rng& class_rng) const { return class_rng.uniform(lo, hi); }
};

double jittered(double mean, double jitter, Rng& rng) { return mean + rng.uniform(-jitter, jitter); }

double lip_top_curve(const FaceParams& p, double x) {
    const double t = x / p.mouth_half_w;
    return p.mouth_y - p.lip_up * (1.0 - t * t);
}

double lip_bottom_curve(const FaceParams& p, double x) {
    const double t = x / p.mouth_half_w;
    return p.mouth_y + p.lip_down * (1.0 - t * t);
}

Vec2 to_image(const FaceParams& p, double qx, double qy) {
    const double c = std::cos(p.theta), s = std::sin(p.theta);
    return {p.cx + c * qx - s * qy, p.cy + s * qx + c * qy};
}

void draw_class_palette(Rng& crng, FaceParams& f) {
    f.skin[0] = crng.uniform(0.75, 0.90);
    f.skin[1] = crng.uniform(0.60, 0.78);
    f.skin[2] = crng.uniform(0.50, 0.68);
    f.lip_color[0] = crng.uniform(0.60, 0.80);
    f.lip_color[1] = crng.uniform(0.20, 0.35);
    f.lip_color[2] = crng.uniform(0.25, 0.40);
    for (int i = 0; i < 3; ++i) f.iris_color[i] = crng.uniform(0.10, 0.60);
    for (int i = 0; i < 3; ++i) {
        f.bg_top[i] = crng.uniform(0.15, 0.45);
        f.bg_bottom[i] = std::min(0.95, f.bg_top[i] + crng.uniform(0.20, 0.35));
    }
}

bool landmarks_inside(const Landmarks& lms, std::size_t size) {
    for (const Landmark& lm : lms)
        if (lm.x < 1.0 || lm.x >= static_cast<double>(size) - 1.0 || lm.y < 1.0 ||
            lm.y >= static_cast<double>(size) - 1.0)
            return false;
    return true;
}

}  // namespace

Landmarks face_landmarks(const FaceParams& p) {
    auto at = [&](double qx, double qy) {
        const Vec2 v = to_image(p, qx, qy);
        return Landmark{v.x, v.y};
    };
    Landmarks lm(14);
    lm[0] = at(-p.eye_dx - p.eye_w, -p.eye_dy);   // outer left corner
    lm[1] = at(-p.eye_dx + p.eye_w, -p.eye_dy);   // inner left corner
    lm[2] = at(p.eye_dx - p.eye_w, -p.eye_dy);    // inner right corner
    lm[3] = at(p.eye_dx + p.eye_w, -p.eye_dy);    // outer right corner
    lm[4] = at(-p.eye_dx, -p.eye_dy);             // left eye center
    lm[5] = at(p.eye_dx, -p.eye_dy);              // right eye center
    lm[6] = at(-p.philtrum_dx, lip_top_curve(p, -p.philtrum_dx));  // left crista philtri
    lm[7] = at(0.0, p.nose_base_y);                                // nose base
    lm[8] = at(p.philtrum_dx, lip_top_curve(p, p.philtrum_dx));    // right crista philtri
    lm[9] = at(0.0, p.mouth_y - p.lip_up);                         // labiale superius
    lm[10] = at(-p.mouth_half_w, p.mouth_y);                       // left cheilion
    lm[11] = at(p.mouth_half_w, p.mouth_y);                        // right cheilion
    lm[12] = at(0.0, p.mouth_y + p.lip_down);                      // labiale inferius
    lm[13] = at(0.0, p.mouth_y + p.lip_down + p.sublabiale_gap);   // sublabiale
    return lm;
}

std::vector<std::size_t> face_flip_permutation() { return {3, 2, 1, 0, 5, 4, 8, 7, 6, 9, 11, 10, 12, 13}; }

FaceParams face_params_for(std::uint64_t seed, std::size_t index, int identity_class, std::size_t image_size) {
    require(image_size >= 32, ErrorKind::config, "faces need an image size of at least 32");
    const double S = static_cast<double>(image_size);
    Rng crng(stream(seed, {kClassStream, static_cast<std::uint64_t>(identity_class)}));

    // Class means, drawn once per class in a fixed order. Jitter radii are
    // sized so samples of one class vary substantially (hard localization)
    // while the joint 16-parameter vector still separates classes.
    const ParamRange ranges[] = {
        {0.28, 0.33, 0.024},    // head_a
        {0.36, 0.42, 0.024},    // head_b
        {0.13, 0.17, 0.018},    // eye_dx
        {0.10, 0.14, 0.018},    // eye_dy
        {0.055, 0.075, 0.012},  // eye_w
        {0.030, 0.045, 0.009},  // eye_h
        {0.015, 0.022, 0.006},  // iris_r
        {0.05, 0.09, 0.018},    // nose_base_y
        {0.020, 0.035, 0.009},  // nose_half_w
        {0.08, 0.12, 0.018},    // nose_h
        {0.020, 0.035, 0.009},  // philtrum_dx
        {0.16, 0.21, 0.018},    // mouth_y
        {0.09, 0.13, 0.018},    // mouth_half_w
        {0.020, 0.035, 0.009},  // lip_up
        {0.025, 0.040, 0.009},  // lip_down
        {0.025, 0.040, 0.009},  // sublabiale_gap
    };
    double means[16];
    for (int i = 0; i < 16; ++i) means[i] = ranges[i].mean(crng);
    const double theta_mean = crng.uniform(-6.0, 6.0) * kPi / 180.0;

    FaceParams f;
    f.identity_class = identity_class;
    draw_class_palette(crng, f);
    double base_skin[3], base_lip[3];
    for (int i = 0; i < 3; ++i) {
        base_skin[i] = f.skin[i];
        base_lip[i] = f.lip_color[i];
    }

    f.detail_seed = stream(seed, {kDetailStream, index});
    Rng srng(stream(seed, {kSampleStream, index}));
    for (int attempt = 0; attempt < 100; ++attempt) {
        f.cx = S / 2.0 + srng.uniform(-0.08, 0.08) * S;
        f.cy = S / 2.0 + srng.uniform(-0.08, 0.08) * S;
        f.theta = theta_mean + srng.uniform(-4.0, 4.0) * kPi / 180.0;
        // Correlated whole-face scale on top of the per-parameter jitter.
        const double face_scale = srng.uniform(0.72, 1.18);
        double v[16];
        for (int i = 0; i < 16; ++i) v[i] = jittered(means[i], ranges[i].jitter, srng) * S * face_scale;
        f.head_a = v[0];
        f.head_b = v[1];
        f.eye_dx = v[2];
        f.eye_dy = v[3];
        f.eye_w = v[4];
        f.eye_h = v[5];
        f.iris_r = v[6];
        f.nose_base_y = v[7];
        f.nose_half_w = v[8];
        f.nose_h = v[9];
        f.philtrum_dx = v[10];
        f.mouth_y = v[11];
        f.mouth_half_w = v[12];
        f.lip_up = v[13];
        f.lip_down = v[14];
        f.sublabiale_gap = v[15];
        for (int i = 0; i < 3; ++i) {
            f.skin[i] = std::clamp(base_skin[i] + srng.uniform(-0.08, 0.08), 0.0, 1.0);
            f.lip_color[i] = std::clamp(base_lip[i] + srng.uniform(-0.08, 0.08), 0.0, 1.0);
        }
        if (landmarks_inside(face_landmarks(f), image_size)) return f;
    }
    throw_data("face parameters escaped the image after 100 re-jitters (sample " + std::to_string(index) + ")");
}

namespace {

struct FaceShapes {
    const FaceParams& p;

    static double ellipse_level(double dx, double dy, double ax, double ay) {
        const double u = dx / ax, v = dy / ay;
        return u * u + v * v;
    }

    bool head(double qx, double qy) const { return ellipse_level(qx, qy, p.head_a, p.head_b) <= 1.0; }
    bool head_outline(double qx, double qy) const {
        const double l = ellipse_level(qx, qy, p.head_a, p.head_b);
        const double t = 1.2 / std::min(p.head_a, p.head_b);
        const double r = std::sqrt(l);
        return r >= 1.0 - t && r <= 1.0 + t;
    }

    // side: -1 left eye, +1 right eye
    bool eye_fill(double qx, double qy, int side) const {
        return ellipse_level(qx - side * p.eye_dx, qy + p.eye_dy, p.eye_w, p.eye_h) <= 1.0;
    }
    bool eye_outline(double qx, double qy, int side) const {
        const double dx = qx - side * p.eye_dx, dy = qy + p.eye_dy;
        const double band = 0.75;  // half-thickness in pixels
        const bool outer = ellipse_level(dx, dy, p.eye_w + band, p.eye_h + band) <= 1.0;
        const bool inner = p.eye_w > band && p.eye_h > band &&
                           ellipse_level(dx, dy, p.eye_w - band, p.eye_h - band) < 1.0;
        return outer && !inner;
    }
    bool iris(double qx, double qy, int side) const {
        const double dx = qx - side * p.eye_dx, dy = qy + p.eye_dy;
        return dx * dx + dy * dy <= p.iris_r * p.iris_r;
    }
    bool pupil(double qx, double qy, int side) const {
        const double dx = qx - side * p.eye_dx, dy = qy + p.eye_dy;
        const double r = p.iris_r * 0.45;
        return dx * dx + dy * dy <= r * r;
    }

    static double seg_dist(double qx, double qy, double ax, double ay, double bx, double by) {
        const double ux = bx - ax, uy = by - ay;
        const double len2 = ux * ux + uy * uy;
        double t = len2 > 0 ? ((qx - ax) * ux + (qy - ay) * uy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double dx = qx - (ax + t * ux), dy = qy - (ay + t * uy);
        return std::hypot(dx, dy);
    }

    bool nose(double qx, double qy) const {
        const double top = p.nose_base_y - p.nose_h;
        const double r = 0.6;
        return seg_dist(qx, qy, -p.nose_half_w, top, 0.0, p.nose_base_y) <= r ||
               seg_dist(qx, qy, p.nose_half_w, top, 0.0, p.nose_base_y) <= r;
    }

    bool philtrum(double qx, double qy) const {
        const double r = 0.5;
        const double y0 = p.nose_base_y + 1.0;
        return seg_dist(qx, qy, -p.philtrum_dx, y0, -p.philtrum_dx, lip_top_curve(p, -p.philtrum_dx)) <= r ||
               seg_dist(qx, qy, p.philtrum_dx, y0, p.philtrum_dx, lip_top_curve(p, p.philtrum_dx)) <= r;
    }

    bool lips(double qx, double qy) const {
        if (qx < -p.mouth_half_w || qx > p.mouth_half_w) return false;
        return qy >= lip_top_curve(p, qx) && qy <= lip_bottom_curve(p, qx);
    }

    bool sublabiale_crease(double qx, double qy) const {
        const double y = p.mouth_y + p.lip_down + p.sublabiale_gap;
        return seg_dist(qx, qy, -p.mouth_half_w * 0.4, y, p.mouth_half_w * 0.4, y) <= 0.5;
    }
};

}  // namespace

ImageU8 render_face(const FaceParams& p, std::size_t image_size) {
    const double S = static_cast<double>(image_size);
    ImageU8 img;
    img.w = img.h = image_size;
    img.rgb.resize(image_size * image_size * 3);
    const FaceShapes sh{p};
    const double cos_t = std::cos(p.theta), sin_t = std::sin(p.theta);
    const double dark[3] = {0.05, 0.05, 0.06};
    const double sclera[3] = {0.93, 0.93, 0.91};
    const double skin_line[3] = {p.skin[0] * 0.55, p.skin[1] * 0.55, p.skin[2] * 0.55};

    // Per-sample nuisance detail: soft background blobs behind the face and
    // low-amplitude pixel noise, both deterministic in detail_seed.
    Rng det(p.detail_seed);
    constexpr int kBlobs = 7;
    double bx[kBlobs], by[kBlobs], br[kBlobs], ba[kBlobs], bc[kBlobs][3];
    for (int b = 0; b < kBlobs; ++b) {
        bx[b] = det.uniform(0.04, 0.96) * S;
        by[b] = det.uniform(0.04, 0.96) * S;
        br[b] = det.uniform(0.05, 0.14) * S;
        ba[b] = det.uniform(0.35, 0.80);
        for (int i = 0; i < 3; ++i) bc[b][i] = det.uniform(0.05, 0.95);
    }

    for (std::size_t py = 0; py < image_size; ++py) {
        for (std::size_t px = 0; px < image_size; ++px) {
            double acc[3] = {0, 0, 0};
            for (int sy = 0; sy < 3; ++sy) {
                for (int sx = 0; sx < 3; ++sx) {
                    const double ix = static_cast<double>(px) + (sx + 0.5) / 3.0 - 0.5;
                    const double iy = static_cast<double>(py) + (sy + 0.5) / 3.0 - 0.5;
                    // face-frame coordinates
                    const double rx = ix - p.cx, ry = iy - p.cy;
                    const double qx = cos_t * rx + sin_t * ry;
                    const double qy = -sin_t * rx + cos_t * ry;

                    const double t = iy / S;
                    double c[3];
                    for (int i = 0; i < 3; ++i) c[i] = p.bg_top[i] * (1 - t) + p.bg_bottom[i] * t;
                    for (int b = 0; b < kBlobs; ++b) {
                        const double d2 = (ix - bx[b]) * (ix - bx[b]) + (iy - by[b]) * (iy - by[b]);
                        const double a = ba[b] * std::exp(-d2 / (2.0 * br[b] * br[b]));
                        for (int i = 0; i < 3; ++i) c[i] = c[i] * (1.0 - a) + bc[b][i] * a;
                    }
                    if (sh.head(qx, qy)) {
                        // soft vertical shading on the face
                        const double shade = 1.0 - 0.15 * (qy / p.head_b);
                        for (int i = 0; i < 3; ++i) c[i] = std::clamp(p.skin[i] * shade, 0.0, 1.0);
                        if (sh.head_outline(qx, qy))
                            for (int i = 0; i < 3; ++i) c[i] = skin_line[i];
                        for (int side : {-1, 1}) {
                            if (sh.eye_fill(qx, qy, side))
                                for (int i = 0; i < 3; ++i) c[i] = sclera[i];
                            if (sh.iris(qx, qy, side))
                                for (int i = 0; i < 3; ++i) c[i] = p.iris_color[i];
                            if (sh.pupil(qx, qy, side))
                                for (int i = 0; i < 3; ++i) c[i] = dark[i];
                            if (sh.eye_outline(qx, qy, side))
                                for (int i = 0; i < 3; ++i) c[i] = dark[i];
                        }
                        if (sh.nose(qx, qy))
                            for (int i = 0; i < 3; ++i) c[i] = skin_line[i];
                        if (sh.philtrum(qx, qy))
                            for (int i = 0; i < 3; ++i) c[i] = skin_line[i];
                        if (sh.lips(qx, qy))
                            for (int i = 0; i < 3; ++i) c[i] = p.lip_color[i];
                        if (sh.sublabiale_crease(qx, qy))
                            for (int i = 0; i < 3; ++i) c[i] = skin_line[i];
                    }
                    for (int i = 0; i < 3; ++i) acc[i] += c[i];
                }
            }
            for (int i = 0; i < 3; ++i) {
                const double noisy = acc[i] / 9.0 + det.uniform(-0.035, 0.035);
                img.at(py, px, static_cast<std::size_t>(i)) =
                    static_cast<std::uint8_t>(std::lround(std::clamp(noisy, 0.0, 1.0) * 255.0));
            }
        }
    }
    return img;
}

ImageU8 render_texture(std::uint64_t seed, std::size_t index, int texture_class, std::size_t image_size) {
    const double S = static_cast<double>(image_size);
    Rng crng(stream(seed, {kClassStream, static_cast<std::uint64_t>(texture_class)}));
    double c1[3], c2[3];
    for (int i = 0; i < 3; ++i) c1[i] = crng.uniform(0.05, 0.5);
    for (int i = 0; i < 3; ++i) c2[i] = std::min(1.0, c1[i] + crng.uniform(0.3, 0.5));
    const int family = texture_class % 3;
    const double angle_mean = crng.uniform(0.0, kPi);
    const double freq_mean = crng.uniform(3.0, 7.0);
    const double cell_mean = crng.uniform(0.09, 0.16);  // fraction of image size
    const int blob_count = 6 + static_cast<int>(crng.next_u64() % 5);
    std::vector<double> blob_cx(blob_count), blob_cy(blob_count);
    for (int b = 0; b < blob_count; ++b) {
        blob_cx[b] = crng.uniform(0.1, 0.9);
        blob_cy[b] = crng.uniform(0.1, 0.9);
    }
    const double blob_r_mean = crng.uniform(0.07, 0.12);

    Rng srng(stream(seed, {kSampleStream, index}));
    const double angle = angle_mean + srng.uniform(-0.15, 0.15);
    const double freq = freq_mean + srng.uniform(-0.5, 0.5);
    const double phase = srng.uniform(0.0, 2.0 * kPi);
    const double cell = std::max(4.0, (cell_mean + srng.uniform(-0.01, 0.01)) * S);
    const double ox = srng.uniform(0.0, cell), oy = srng.uniform(0.0, cell);
    const double blob_r = std::max(2.0, (blob_r_mean + srng.uniform(-0.01, 0.01)) * S);
    std::vector<double> jx(blob_count), jy(blob_count);
    for (int b = 0; b < blob_count; ++b) {
        jx[b] = blob_cx[b] * S + srng.uniform(-0.04, 0.04) * S;
        jy[b] = blob_cy[b] * S + srng.uniform(-0.04, 0.04) * S;
    }

    ImageU8 img;
    img.w = img.h = image_size;
    img.rgb.resize(image_size * image_size * 3);
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (std::size_t py = 0; py < image_size; ++py) {
        for (std::size_t px = 0; px < image_size; ++px) {
            const double x = static_cast<double>(px), y = static_cast<double>(py);
            double v = 0.0;
            if (family == 0) {
                const double u = (x * ca + y * sa) / S;
                v = 0.5 + 0.5 * std::sin(2.0 * kPi * freq * u + phase);
                v = std::clamp((v - 0.5) * 3.0 + 0.5, 0.0, 1.0);  // sharpen toward stripes
            } else if (family == 1) {
                const double gx = std::floor((x * ca + y * sa + ox) / cell);
                const double gy = std::floor((-x * sa + y * ca + oy) / cell);
                v = (static_cast<long long>(gx + gy) % 2 + 2) % 2 == 0 ? 0.0 : 1.0;
            } else {
                double sum = 0.0;
                for (int b = 0; b < blob_count; ++b) {
                    const double dx = x - jx[b], dy = y - jy[b];
                    sum += std::exp(-(dx * dx + dy * dy) / (2.0 * blob_r * blob_r));
                }
                v = std::clamp(sum, 0.0, 1.0);
            }
            for (int i = 0; i < 3; ++i)
                img.at(py, px, static_cast<std::size_t>(i)) =
                    static_cast<std::uint8_t>(std::lround((c1[i] * (1 - v) + c2[i] * v) * 255.0));
        }
    }
    return img;
}

DatasetManifest generate_dataset(const std::string& out_dir, std::size_t n, std::size_t image_size, std::size_t c,
                                 std::uint64_t seed, DatasetVariant variant) {
    require(c >= 2, ErrorKind::config, "dataset needs at least 2 classes");
    require(n >= c, ErrorKind::config, "dataset needs at least one sample per class");
    require(n >= 10, ErrorKind::config, "dataset needs at least 10 samples for a 70/10/20 split");
    require(image_size % 4 == 0 && image_size >= 32, ErrorKind::config,
            "image size must be a multiple of 4 and at least 32");

    namespace fs = std::filesystem;
    const fs::path root(out_dir);
    fs::create_directories(root / "images");
    const bool faces = variant == DatasetVariant::faces;
    if (faces) fs::create_directories(root / "landmarks");

    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % c);

    std::vector<Landmarks> all_landmarks;
    for (std::size_t i = 0; i < n; ++i) {
        ImageU8 img;
        if (faces) {
            const FaceParams p = face_params_for(seed, i, labels[i], image_size);
            img = render_face(p, image_size);
            const Landmarks lms = face_landmarks(p);
            write_landmarks_csv((root / "landmarks" / (sample_stem(i) + ".csv")).string(), lms);
            all_landmarks.push_back(lms);
        } else {
            img = render_texture(seed, i, labels[i], image_size);
        }
        write_ppm((root / "images" / (sample_stem(i) + ".ppm")).string(), img);
    }
    write_labels_csv((root / "labels.csv").string(), labels);

    // 70/10/20 split: order indices by a per-index hash, then cut.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const std::uint64_t ha = stream(seed, {kSplitStream, a});
        const std::uint64_t hb = stream(seed, {kSplitStream, b});
        return ha != hb ? ha < hb : a < b;
    });
    const std::size_t n_train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n)));
    const std::size_t n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
    require(n_train >= 1 && n_val >= 1 && n_train + n_val < n, ErrorKind::config,
            "dataset too small for a 70/10/20 split");

    DatasetManifest m;
    m.variant = faces ? "faces" : "textures";
    m.n = n;
    m.image_size = image_size;
    m.k = faces ? 14 : 0;
    m.c = c;
    m.seed = seed;
    m.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    m.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    m.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
    if (faces) m.flip_permutation = face_flip_permutation();

    // Channel statistics of the train split on [0,1] intensities.
    double sum[3] = {0, 0, 0}, sumsq[3] = {0, 0, 0};
    std::size_t count = 0;
    for (std::size_t idx : m.train) {
        const ImageU8 img = read_ppm((root / "images" / (sample_stem(idx) + ".ppm")).string());
        for (std::size_t i = 0; i < img.rgb.size(); i += 3)
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const double v = img.rgb[i + ch] / 255.0;
                sum[ch] += v;
                sumsq[ch] += v * v;
            }
        count += img.w * img.h;
    }
    for (std::size_t ch = 0; ch < 3; ++ch) {
        m.channel_mean[ch] = sum[ch] / static_cast<double>(count);
        const double var = sumsq[ch] / static_cast<double>(count) - m.channel_mean[ch] * m.channel_mean[ch];
        m.channel_std[ch] = std::sqrt(std::max(var, 0.0));
        require(m.channel_std[ch] > 0.0, ErrorKind::data, "degenerate dataset: constant channel");
    }

    m.validate();
    std::ofstream os(root / "manifest.json", std::ios::binary);
    require(os.good(), ErrorKind::data, "cannot write manifest in '" + out_dir + "'");
    os << manifest_to_json(m).dump(2) << "\n";
    require(os.good(), ErrorKind::data, "write failed for manifest in '" + out_dir + "'");
    return m;
}

}  // namespace rtl
