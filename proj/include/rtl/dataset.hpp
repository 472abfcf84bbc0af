#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rtl/heatmap.hpp"
#include "rtl/image_io.hpp"
#include "rtl/jsonutil.hpp"
#include "rtl/tensor.hpp"

namespace rtl {

// On-disk dataset layout: manifest.json, images/NNNN.ppm, landmarks/NNNN.csv
// (absent for k=0 texture variants), labels.csv.
struct DatasetManifest {
    std::string variant = "faces";
    std::size_t n = 0;
    std::size_t image_size = 0;
    std::size_t k = 0;
    std::size_t c = 0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> train, val, test;
    std::array<double, 3> channel_mean{0, 0, 0};  // train-split statistics of [0,1] intensities
    std::array<double, 3> channel_std{1, 1, 1};
    std::vector<std::size_t> flip_permutation;  // 0-based landmark reindexing under mirror

    void validate() const {
        require(n >= 1 && image_size >= 4 && image_size % 4 == 0, ErrorKind::data, "manifest: bad extent/count");
        require(train.size() + val.size() + test.size() == n, ErrorKind::data, "manifest: splits do not cover n");
        if (k > 0) {
            require(flip_permutation.size() == k, ErrorKind::data, "manifest: permutation length != k");
            for (std::size_t i = 0; i < k; ++i) {
                require(flip_permutation[i] < k, ErrorKind::data, "manifest: permutation out of range");
                require(flip_permutation[flip_permutation[i]] == i, ErrorKind::data,
                        "manifest: permutation is not an involution");
            }
        }
        for (double s : channel_std) require(s > 0.0, ErrorKind::data, "manifest: non-positive channel std");
    }
};

inline std::string sample_stem(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04zu", index);
    return buf;
}

inline ordered_json manifest_to_json(const DatasetManifest& m) {
    ordered_json j;
    j["variant"] = m.variant;
    j["n"] = m.n;
    j["image_size"] = m.image_size;
    j["k"] = m.k;
    j["c"] = m.c;
    j["seed"] = m.seed;
    j["counts"] = {{"train", m.train.size()}, {"val", m.val.size()}, {"test", m.test.size()}};
    j["splits"] = {{"train", m.train}, {"val", m.val}, {"test", m.test}};
    j["channel_mean"] = m.channel_mean;
    j["channel_std"] = m.channel_std;
    j["flip_permutation"] = m.flip_permutation;
    return j;
}

inline DatasetManifest manifest_from_json(const ordered_json& j) {
    jsonutil::reject_unknown_keys(j,
                                  {"variant", "n", "image_size", "k", "c", "seed", "counts", "splits",
                                   "channel_mean", "channel_std", "flip_permutation"},
                                  "manifest");
    DatasetManifest m;
    m.variant = jsonutil::get_string(j, "variant", m.variant);
    m.n = jsonutil::get_size(j, "n", 0);
    m.image_size = jsonutil::get_size(j, "image_size", 0);
    m.k = jsonutil::get_size(j, "k", 0);
    m.c = jsonutil::get_size(j, "c", 0);
    m.seed = jsonutil::get_u64(j, "seed", 0);
    require(j.contains("splits"), ErrorKind::data, "manifest: missing splits");
    m.train = jsonutil::get_size_array(j["splits"], "train", {});
    m.val = jsonutil::get_size_array(j["splits"], "val", {});
    m.test = jsonutil::get_size_array(j["splits"], "test", {});
    auto mean = jsonutil::get_double_array(j, "channel_mean", {0, 0, 0});
    auto stdv = jsonutil::get_double_array(j, "channel_std", {1, 1, 1});
    require(mean.size() == 3 && stdv.size() == 3, ErrorKind::data, "manifest: channel stats must have 3 entries");
    std::copy(mean.begin(), mean.end(), m.channel_mean.begin());
    std::copy(stdv.begin(), stdv.end(), m.channel_std.begin());
    m.flip_permutation = jsonutil::get_size_array(j, "flip_permutation", {});
    m.validate();
    return m;
}

inline void write_landmarks_csv(const std::string& path, const Landmarks& lms) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), ErrorKind::data, "cannot write '" + path + "'");
    os << "k,x,y\n";
    for (std::size_t i = 0; i < lms.size(); ++i)
        os << (i + 1) << "," << fmt_double(lms[i].x) << "," << fmt_double(lms[i].y) << "\n";
    require(os.good(), ErrorKind::data, "write failed for '" + path + "'");
}

inline Landmarks read_landmarks_csv(const std::string& path, std::size_t expected_k) {
    std::ifstream is(path);
    require(is.good(), ErrorKind::data, "cannot open '" + path + "'");
    std::string line;
    require(static_cast<bool>(std::getline(is, line)) && line.rfind("k,x,y", 0) == 0, ErrorKind::data,
            "'" + path + "': missing landmark CSV header");
    Landmarks out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::size_t p1 = line.find(','), p2 = line.find(',', p1 + 1);
        require(p1 != std::string::npos && p2 != std::string::npos, ErrorKind::data,
                "'" + path + "': malformed line '" + line + "'");
        try {
            const std::size_t idx = std::stoul(line.substr(0, p1));
            require(idx == out.size() + 1, ErrorKind::data, "'" + path + "': landmark indices must be 1..K in order");
            out.push_back({std::stod(line.substr(p1 + 1, p2 - p1 - 1)), std::stod(line.substr(p2 + 1))});
        } catch (const Error&) {
            throw;
        } catch (const std::exception&) {
            throw_data("'" + path + "': malformed line '" + line + "'");
        }
    }
    require(expected_k == 0 || out.size() == expected_k, ErrorKind::data,
            "'" + path + "': expected " + std::to_string(expected_k) + " landmarks, found " +
                std::to_string(out.size()));
    return out;
}

inline void write_labels_csv(const std::string& path, const std::vector<int>& labels) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), ErrorKind::data, "cannot write '" + path + "'");
    os << "index,class\n";
    for (std::size_t i = 0; i < labels.size(); ++i) os << i << "," << labels[i] << "\n";
    require(os.good(), ErrorKind::data, "write failed for '" + path + "'");
}

inline std::vector<int> read_labels_csv(const std::string& path, std::size_t expected_n) {
    std::ifstream is(path);
    require(is.good(), ErrorKind::data, "cannot open '" + path + "'");
    std::string line;
    require(static_cast<bool>(std::getline(is, line)) && line.rfind("index,class", 0) == 0, ErrorKind::data,
            "'" + path + "': missing labels CSV header");
    std::vector<int> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const std::size_t p = line.find(',');
        require(p != std::string::npos, ErrorKind::data, "'" + path + "': malformed line '" + line + "'");
        try {
            require(std::stoul(line.substr(0, p)) == out.size(), ErrorKind::data,
                    "'" + path + "': indices must be 0..n-1 in order");
            out.push_back(std::stoi(line.substr(p + 1)));
        } catch (const Error&) {
            throw;
        } catch (const std::exception&) {
            throw_data("'" + path + "': malformed line '" + line + "'");
        }
    }
    require(out.size() == expected_n, ErrorKind::data, "'" + path + "': label count mismatch");
    return out;
}

// Fully materialized dataset; desk-scale images are small enough to hold.
struct Dataset {
    DatasetManifest manifest;
    std::vector<ImageU8> images;
    std::vector<Landmarks> landmarks;  // empty when manifest.k == 0
    std::vector<int> labels;
};

inline Dataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    require(fs::exists(root / "manifest.json"), ErrorKind::data, "no manifest.json in '" + dir + "'");
    ordered_json mj;
    {
        std::ifstream is(root / "manifest.json");
        try {
            is >> mj;
        } catch (const std::exception& e) {
            throw_data("malformed manifest in '" + dir + "': " + e.what());
        }
    }
    Dataset ds;
    ds.manifest = manifest_from_json(mj);
    ds.labels = read_labels_csv((root / "labels.csv").string(), ds.manifest.n);
    ds.images.reserve(ds.manifest.n);
    for (std::size_t i = 0; i < ds.manifest.n; ++i) {
        ImageU8 img = read_ppm((root / "images" / (sample_stem(i) + ".ppm")).string());
        require(img.w == ds.manifest.image_size && img.h == ds.manifest.image_size, ErrorKind::data,
                "image " + std::to_string(i) + " extent mismatch with manifest");
        ds.images.push_back(std::move(img));
        if (ds.manifest.k > 0)
            ds.landmarks.push_back(
                read_landmarks_csv((root / "landmarks" / (sample_stem(i) + ".csv")).string(), ds.manifest.k));
    }
    for (int lab : ds.labels)
        require(lab >= 0 && static_cast<std::size_t>(lab) < ds.manifest.c, ErrorKind::data,
                "label out of range [0, C)");
    return ds;
}

// Intensity-normalized float planes: [0,1]-scaled then standardized with
// the manifest's train-split statistics, shaped [H, W, 3].
template <typename T>
Tensor<T> image_to_tensor(const ImageU8& img, const DatasetManifest& m) {
    Tensor<T> t({img.h, img.w, 3});
    for (std::size_t i = 0; i < img.rgb.size(); ++i) {
        const std::size_t c = i % 3;
        t[i] = static_cast<T>((static_cast<double>(img.rgb[i]) / 255.0 - m.channel_mean[c]) / m.channel_std[c]);
    }
    return t;
}

}  // namespace rtl
