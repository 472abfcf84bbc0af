#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "rtl/heatmap.hpp"
#include "rtl/jsonutil.hpp"

// Landmark evaluation: per-image localization error, its mean/std over a
// test set, the cumulative error distribution, failure rates and the
// CED-derived area under the curve. All of it is computed in double.
namespace rtl {

inline constexpr double kFailureThresholds[3] = {1.0, 1.2, 1.4};
inline constexpr std::size_t kCedGridPoints = 200;
inline constexpr double kCedGridMax = 2.0;

// Mean over landmarks of the Euclidean distance, in input pixels.
inline double per_image_error(const Landmarks& pred, const Landmarks& gt) {
    require(pred.size() == gt.size() && !pred.empty(), ErrorKind::shape,
            "per_image_error: landmark count mismatch");
    double sum = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k)
        sum += std::hypot(pred[k].x - gt[k].x, pred[k].y - gt[k].y);
    return sum / static_cast<double>(pred.size());
}

// Per-landmark mean distances over a set of images; averages back to the
// overall mean error when every image shares the same K.
inline std::vector<double> per_landmark_errors(const std::vector<Landmarks>& pred,
                                               const std::vector<Landmarks>& gt) {
    require(pred.size() == gt.size() && !pred.empty(), ErrorKind::shape, "per_landmark_errors: size mismatch");
    const std::size_t k = pred[0].size();
    std::vector<double> sums(k, 0.0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        require(pred[i].size() == k && gt[i].size() == k, ErrorKind::shape,
                "per_landmark_errors: inconsistent landmark count");
        for (std::size_t j = 0; j < k; ++j)
            sums[j] += std::hypot(pred[i][j].x - gt[i][j].x, pred[i][j].y - gt[i][j].y);
    }
    for (double& s : sums) s /= static_cast<double>(pred.size());
    return sums;
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // population standard deviation
};

inline MeanStd mse(const std::vector<double>& errors) {
    require(!errors.empty(), ErrorKind::data, "mse: empty error list");
    MeanStd r;
    for (double e : errors) r.mean += e;
    r.mean /= static_cast<double>(errors.size());
    double ss = 0.0;
    for (double e : errors) ss += (e - r.mean) * (e - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(errors.size()));
    return r;
}

struct CedPoint {
    double error = 0.0;
    double fraction = 0.0;  // fraction of images with error <= this value
};

// Empirical CDF sampled on a uniform 200-point grid over [0, 2] merged
// with the exact sorted error values, so every jump is represented.
inline std::vector<CedPoint> ced(const std::vector<double>& errors) {
    require(!errors.empty(), ErrorKind::data, "ced: empty error list");
    std::vector<double> thresholds;
    thresholds.reserve(kCedGridPoints + errors.size());
    for (std::size_t i = 0; i < kCedGridPoints; ++i)
        thresholds.push_back(kCedGridMax * static_cast<double>(i) / static_cast<double>(kCedGridPoints - 1));
    for (double e : errors) thresholds.push_back(e);
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    std::vector<double> sorted = errors;
    std::sort(sorted.begin(), sorted.end());
    std::vector<CedPoint> out;
    out.reserve(thresholds.size());
    const double n = static_cast<double>(sorted.size());
    for (double t : thresholds) {
        const auto count = std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
        out.push_back({t, static_cast<double>(count) / n});
    }
    return out;
}

// Fraction of per-image errors strictly greater than the threshold.
inline double failure_rate(const std::vector<double>& errors, double threshold) {
    require(threshold > 0.0, ErrorKind::config, "failure_rate: threshold must be positive");
    require(!errors.empty(), ErrorKind::data, "failure_rate: empty error list");
    std::size_t count = 0;
    for (double e : errors)
        if (e > threshold) ++count;
    return static_cast<double>(count) / static_cast<double>(errors.size());
}

// Trapezoidal integral of the CED over [0, max_threshold], normalized by
// max_threshold so a perfect detector scores 1.
inline double auc(const std::vector<CedPoint>& curve, double max_threshold) {
    require(max_threshold > 0.0, ErrorKind::config, "auc: max_threshold must be positive");
    require(!curve.empty(), ErrorKind::data, "auc: empty curve");
    std::vector<CedPoint> pts;
    for (const CedPoint& p : curve)
        if (p.error <= max_threshold) pts.push_back(p);
    if (pts.empty() || pts.front().error > 0.0) {
        // The curve always starts at 0 by construction; guard anyway.
        const double f0 = curve.front().error <= 0.0 ? curve.front().fraction : 0.0;
        pts.insert(pts.begin(), {0.0, f0});
    }
    if (pts.back().error < max_threshold) pts.push_back({max_threshold, pts.back().fraction});
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        area += (pts[i].error - pts[i - 1].error) * (pts[i].fraction + pts[i - 1].fraction) * 0.5;
    return area / max_threshold;
}

struct EvalReport {
    MeanStd error_stats;
    std::vector<double> per_landmark;
    std::vector<std::pair<double, double>> failure_rates;  // threshold -> fraction
    std::vector<std::pair<double, double>> aucs;           // threshold -> value
    std::vector<CedPoint> curve;
};

inline EvalReport evaluate(const std::vector<Landmarks>& pred, const std::vector<Landmarks>& gt) {
    require(pred.size() == gt.size() && !pred.empty(), ErrorKind::data, "evaluate: prediction/target size mismatch");
    std::vector<double> errors;
    errors.reserve(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) errors.push_back(per_image_error(pred[i], gt[i]));
    EvalReport rep;
    rep.error_stats = mse(errors);
    rep.per_landmark = per_landmark_errors(pred, gt);
    rep.curve = ced(errors);
    for (double t : kFailureThresholds) {
        rep.failure_rates.emplace_back(t, failure_rate(errors, t));
        rep.aucs.emplace_back(t, auc(rep.curve, t));
    }
    return rep;
}

inline std::string format_mean_std(const MeanStd& ms) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f ± %.2f", ms.mean, ms.std);
    return buf;
}

inline ordered_json eval_report_to_json(const EvalReport& rep) {
    ordered_json j;
    j["mse_mean"] = rep.error_stats.mean;
    j["mse_std"] = rep.error_stats.std;
    j["mse_formatted"] = format_mean_std(rep.error_stats);
    j["per_landmark_mse"] = rep.per_landmark;
    ordered_json fr = ordered_json::object();
    for (const auto& [t, v] : rep.failure_rates) fr[fmt_double(t)] = v;
    j["failure_rate"] = std::move(fr);
    ordered_json au = ordered_json::object();
    for (const auto& [t, v] : rep.aucs) au[fmt_double(t)] = v;
    j["auc"] = std::move(au);
    ordered_json curve = ordered_json::array();
    for (const CedPoint& p : rep.curve) curve.push_back({p.error, p.fraction});
    j["ced"] = std::move(curve);
    return j;
}

}  // namespace rtl
