#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <rtl/metrics.hpp>
#include <rtl/rng.hpp>
#include <vector>

using namespace rtl;

namespace {

// Independent brute-force CDF: fraction of errors <= t by direct counting.
double cdf_at(const std::vector<double>& errors, double t) {
    std::size_t c = 0;
    for (double e : errors)
        if (e <= t) ++c;
    return static_cast<double>(c) / static_cast<double>(errors.size());
}

// Independent recomputation of the area under the cumulative curve: build
// the threshold set (uniform 200-point grid over [0,2] merged with the
// exact error values) from scratch, evaluate the empirical CDF by direct
// counting, restrict to [0, tau], and integrate with the trapezoid rule
// normalized by tau.
double auc_reference(const std::vector<double>& errors, double tau) {
    std::vector<double> thr;
    for (std::size_t i = 0; i < 200; ++i) thr.push_back(2.0 * static_cast<double>(i) / 199.0);
    for (double e : errors) thr.push_back(e);
    std::sort(thr.begin(), thr.end());
    thr.erase(std::unique(thr.begin(), thr.end()), thr.end());

    std::vector<std::pair<double, double>> pts;
    for (double t : thr)
        if (t <= tau) pts.emplace_back(t, cdf_at(errors, t));
    if (pts.empty() || pts.front().first > 0.0) pts.insert(pts.begin(), {0.0, cdf_at(errors, 0.0)});
    if (pts.back().first < tau) pts.emplace_back(tau, pts.back().second);
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        area += (pts[i].first - pts[i - 1].first) * (pts[i].second + pts[i - 1].second) * 0.5;
    return area / tau;
}

std::vector<Landmarks> random_landmark_sets(Rng& rng, std::size_t n, std::size_t k, double extent) {
    std::vector<Landmarks> out(n, Landmarks(k));
    for (auto& lv : out)
        for (auto& p : lv) {
            p.x = rng.uniform(0.0, extent);
            p.y = rng.uniform(0.0, extent);
        }
    return out;
}

}  // namespace

TEST_CASE("per-image error oracle: mean of per-landmark Euclidean distances") {
    // distances 3-4-5 triangle (5/... ) hand case: two landmarks, distances 5 and 0 -> 2.5
    Landmarks gt = {{0.0, 0.0}, {10.0, 10.0}};
    Landmarks pr = {{3.0, 4.0}, {10.0, 10.0}};
    CHECK(per_image_error(pr, gt) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK_THROWS_AS(per_image_error(pr, Landmarks{{0.0, 0.0}}), Error);
    CHECK_THROWS_AS(per_image_error(Landmarks{}, Landmarks{}), Error);
}

TEST_CASE("mean/std oracle: population statistics of {1,2,3}") {
    const MeanStd ms = mse({1.0, 2.0, 3.0});
    CHECK(ms.mean == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(ms.std == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-9));  // 0.8165
    CHECK(ms.std == doctest::Approx(0.816496580927726).epsilon(1e-9));
    CHECK_THROWS_AS(mse({}), Error);
}

TEST_CASE("failure rate counts strictly-greater errors") {
    const std::vector<double> errs = {0.5, 1.0, 1.0001, 1.2, 1.4, 2.0};
    CHECK(failure_rate(errs, 1.0) == doctest::Approx(4.0 / 6.0));   // 1.0 itself is not a failure
    CHECK(failure_rate(errs, 1.2) == doctest::Approx(2.0 / 6.0));
    CHECK(failure_rate(errs, 1.4) == doctest::Approx(1.0 / 6.0));
    CHECK_THROWS_AS(failure_rate(errs, 0.0), Error);
    CHECK_THROWS_AS(failure_rate({}, 1.0), Error);
}

TEST_CASE("ced matches direct counting at every emitted threshold") {
    Rng rng(501);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> errs;
        const std::size_t n = 5 + static_cast<std::size_t>(rng.below(40));
        for (std::size_t i = 0; i < n; ++i) errs.push_back(rng.uniform(0.0, 3.0));
        const auto curve = ced(errs);
        // grid + exact errors merged and deduped, monotone in both axes
        REQUIRE(curve.size() >= kCedGridPoints);
        for (std::size_t i = 1; i < curve.size(); ++i) {
            CHECK(curve[i].error > curve[i - 1].error);
            CHECK(curve[i].fraction >= curve[i - 1].fraction);
        }
        for (const auto& p : curve) CHECK(p.fraction == doctest::Approx(cdf_at(errs, p.error)).epsilon(1e-12));
        // every exact error value appears as a threshold
        for (double e : errs) {
            bool found = false;
            for (const auto& p : curve) found |= (p.error == e);
            CHECK(found);
        }
        // the final fraction reaches 1 at max error
        CHECK(curve.back().fraction == doctest::Approx(1.0));
    }
}

TEST_CASE("auc matches an independent step-function integral on random instances") {
    Rng rng(502);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> errs;
        const std::size_t n = 3 + static_cast<std::size_t>(rng.below(30));
        for (std::size_t i = 0; i < n; ++i) errs.push_back(rng.uniform(0.0, 2.5));
        const auto curve = ced(errs);
        for (double tau : {1.0, 1.2, 1.4}) {
            const double got = auc(curve, tau);
            const double want = auc_reference(errs, tau);
            CHECK(got == doctest::Approx(want).epsilon(1e-9));
            CHECK(got >= 0.0);
            CHECK(got <= 1.0);
        }
    }
}

TEST_CASE("evaluate: identity predictions give MSE 0, FR 0, AUC 1") {
    Rng rng(503);
    auto gt = random_landmark_sets(rng, 12, 7, 64.0);
    const EvalReport rep = evaluate(gt, gt);
    CHECK(rep.error_stats.mean == 0.0);
    CHECK(rep.error_stats.std == 0.0);
    for (const auto& [t, v] : rep.failure_rates) CHECK(v == 0.0);
    for (const auto& [t, v] : rep.aucs) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    for (double pl : rep.per_landmark) CHECK(pl == 0.0);
}

TEST_CASE("evaluate on 100 random instances agrees with brute-force recomputation") {
    Rng rng(504);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(rng.below(12));
        const std::size_t k = 1 + static_cast<std::size_t>(rng.below(6));
        auto gt = random_landmark_sets(rng, n, k, 10.0);
        auto pr = gt;
        for (auto& lv : pr)
            for (auto& p : lv) {
                p.x += rng.uniform(-1.5, 1.5);
                p.y += rng.uniform(-1.5, 1.5);
            }
        const EvalReport rep = evaluate(pr, gt);

        std::vector<double> errs;
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < k; ++j)
                s += std::sqrt((pr[i][j].x - gt[i][j].x) * (pr[i][j].x - gt[i][j].x) +
                               (pr[i][j].y - gt[i][j].y) * (pr[i][j].y - gt[i][j].y));
            errs.push_back(s / static_cast<double>(k));
        }
        double mean = 0;
        for (double e : errs) mean += e;
        mean /= static_cast<double>(n);
        double ss = 0;
        for (double e : errs) ss += (e - mean) * (e - mean);
        const double stdev = std::sqrt(ss / static_cast<double>(n));
        CHECK(rep.error_stats.mean == doctest::Approx(mean).epsilon(1e-9));
        CHECK(rep.error_stats.std == doctest::Approx(stdev).epsilon(1e-9));

        // failure rates: exact count equality
        for (const auto& [t, v] : rep.failure_rates) {
            std::size_t c = 0;
            for (double e : errs)
                if (e > t) ++c;
            CHECK(v == static_cast<double>(c) / static_cast<double>(n));
        }
        // AUC against the independent integral
        for (const auto& [t, v] : rep.aucs) CHECK(v == doctest::Approx(auc_reference(errs, t)).epsilon(1e-9));
        // per-landmark means recompose into nothing weird
        double plsum = 0;
        for (double pl : rep.per_landmark) plsum += pl;
        CHECK(plsum / static_cast<double>(k) == doctest::Approx(mean).epsilon(1e-9));
    }
}

TEST_CASE("evaluation metrics are invariant to image order") {
    Rng rng(505);
    auto gt = random_landmark_sets(rng, 9, 4, 20.0);
    auto pr = random_landmark_sets(rng, 9, 4, 20.0);
    const EvalReport a = evaluate(pr, gt);
    std::vector<std::size_t> perm(9);
    for (std::size_t i = 0; i < 9; ++i) perm[i] = i;
    Rng shuffler(506);
    shuffler.shuffle(perm);
    std::vector<Landmarks> gt2(9), pr2(9);
    for (std::size_t i = 0; i < 9; ++i) {
        gt2[i] = gt[perm[i]];
        pr2[i] = pr[perm[i]];
    }
    const EvalReport b = evaluate(pr2, gt2);
    CHECK(a.error_stats.mean == doctest::Approx(b.error_stats.mean).epsilon(1e-12));
    CHECK(a.error_stats.std == doctest::Approx(b.error_stats.std).epsilon(1e-12));
    for (std::size_t i = 0; i < a.failure_rates.size(); ++i)
        CHECK(a.failure_rates[i].second == b.failure_rates[i].second);
    for (std::size_t i = 0; i < a.aucs.size(); ++i)
        CHECK(a.aucs[i].second == doctest::Approx(b.aucs[i].second).epsilon(1e-12));
}

TEST_CASE("mean-std formatting uses two decimals with a plus-minus separator") {
    CHECK(format_mean_std({1.234, 0.567}) == "1.23 ± 0.57");
    CHECK(format_mean_std({0.0, 0.0}) == "0.00 ± 0.00");
}
