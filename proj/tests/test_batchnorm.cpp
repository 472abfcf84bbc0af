#include <doctest.h>

#include <cmath>
#include <rtl/batchnorm.hpp>
#include <rtl/ops_core.hpp>
#include <rtl/rng.hpp>
#include <vector>

using namespace rtl;

namespace {

Tensor<double> rand_tensor(Rng& rng, Dims shape, double lo, double hi) {
    Tensor<double> t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("training mode standardizes each channel to mean 0 / variance 1") {
    Rng rng(301);
    BatchNorm<double> bn(3);
    auto x = make_const(rand_tensor(rng, {2, 4, 5, 3}, -3.0, 5.0));
    auto y = bn.forward(nullptr, x, true);
    const std::size_t m = 2 * 4 * 5;
    for (std::size_t c = 0; c < 3; ++c) {
        double s = 0, s2 = 0;
        for (std::size_t i = 0; i < m; ++i) {
            const double v = y->value[i * 3 + c];
            s += v;
            s2 += v * v;
        }
        const double mean = s / m;
        const double var = s2 / m - mean * mean;
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
        // variance is var/(var+eps) of 1, slightly below 1 because of eps
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("training mode matches a hand recomputation with biased variance") {
    Rng rng(302);
    BatchNorm<double> bn(2);
    bn.gamma->value[0] = 1.5;
    bn.gamma->value[1] = -0.5;
    bn.beta->value[0] = 0.25;
    bn.beta->value[1] = 2.0;
    auto x = make_const(rand_tensor(rng, {2, 2, 3, 2}, -1.0, 4.0));
    auto y = bn.forward(nullptr, x, true);
    const std::size_t m = 2 * 2 * 3;
    for (std::size_t c = 0; c < 2; ++c) {
        double mean = 0;
        for (std::size_t i = 0; i < m; ++i) mean += x->value[i * 2 + c];
        mean /= m;
        double var = 0;
        for (std::size_t i = 0; i < m; ++i) {
            const double d = x->value[i * 2 + c] - mean;
            var += d * d;
        }
        var /= m;  // biased
        for (std::size_t i = 0; i < m; ++i) {
            const double want = bn.gamma->value[c] * (x->value[i * 2 + c] - mean) / std::sqrt(var + 1e-5) +
                                bn.beta->value[c];
            CHECK(y->value[i * 2 + c] == doctest::Approx(want).epsilon(1e-12));
        }
        // running stats blended with momentum 0.9 from (0, 1) defaults
        CHECK(bn.running_mean[c] == doctest::Approx(0.1 * mean).epsilon(1e-12));
        CHECK(bn.running_var[c] == doctest::Approx(0.9 * 1.0 + 0.1 * var).epsilon(1e-12));
    }
}

TEST_CASE("inference mode uses running statistics and never mutates them") {
    Rng rng(303);
    BatchNorm<double> bn(2);
    // Prime running stats with two training passes.
    for (int i = 0; i < 2; ++i) {
        auto xt = make_const(rand_tensor(rng, {3, 2, 2, 2}, -2.0, 2.0));
        bn.forward(nullptr, xt, true);
    }
    const Tensor<double> rm = bn.running_mean;
    const Tensor<double> rv = bn.running_var;

    auto x = make_const(rand_tensor(rng, {1, 2, 2, 2}, -2.0, 2.0));
    auto y1 = bn.forward(nullptr, x, false);
    auto y2 = bn.forward(nullptr, x, false);
    for (std::size_t i = 0; i < y1->value.numel(); ++i) CHECK(y1->value[i] == y2->value[i]);
    for (std::size_t c = 0; c < 2; ++c) {
        CHECK(bn.running_mean[c] == rm[c]);
        CHECK(bn.running_var[c] == rv[c]);
    }
    // and the value agrees with the formula under the frozen stats
    for (std::size_t i = 0; i < y1->value.numel(); ++i) {
        const std::size_t c = i % 2;
        const double want = (x->value[i] - rm[c]) / std::sqrt(rv[c] + 1e-5);
        CHECK(y1->value[i] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("training gradient matches the analytic batch-statistics formula") {
    Rng rng(304);
    BatchNorm<double> bn(2);
    bn.gamma->value[0] = 1.25;
    bn.gamma->value[1] = 0.75;
    auto x = make_var(rand_tensor(rng, {1, 2, 3, 2}, -1.0, 1.0), true);
    const std::size_t m = 6;

    Tape<double> tape;
    auto y = bn.forward(&tape, x, true);

    // Want dL/dy = w for arbitrary fixed w. Use L = 0.5*sum((y - t)^2) with
    // t = detach(y) - w, whose gradient at the current point is exactly w.
    Tensor<double> w_t = rand_tensor(rng, y->value.shape(), -1.0, 1.0);
    Tensor<double> target = y->value;
    for (std::size_t i = 0; i < target.numel(); ++i) target[i] -= w_t[i];
    auto diff = sub(&tape, y, make_const(target));
    auto loss = scale(&tape, sum_all(&tape, square(&tape, diff)), 0.5);
    tape.backward(loss);

    // Independent recomputation of dx from the batch-statistics formula.
    std::vector<double> mean(2, 0.0), var(2, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t c = 0; c < 2; ++c) mean[c] += x->value[i * 2 + c] / m;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t c = 0; c < 2; ++c) {
            const double d = x->value[i * 2 + c] - mean[c];
            var[c] += d * d / m;
        }
    std::vector<double> want(x->value.numel(), 0.0);
    for (std::size_t c = 0; c < 2; ++c) {
        const double inv_std = 1.0 / std::sqrt(var[c] + 1e-5);
        double sum_dy = 0, sum_dy_xhat = 0;
        for (std::size_t i = 0; i < m; ++i) {
            const double xhat = (x->value[i * 2 + c] - mean[c]) * inv_std;
            sum_dy += w_t[i * 2 + c];
            sum_dy_xhat += w_t[i * 2 + c] * xhat;
        }
        for (std::size_t i = 0; i < m; ++i) {
            const double xhat = (x->value[i * 2 + c] - mean[c]) * inv_std;
            want[i * 2 + c] = bn.gamma->value[c] * inv_std / m *
                              (m * w_t[i * 2 + c] - sum_dy - xhat * sum_dy_xhat);
        }
    }
    for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(x->grad[i] == doctest::Approx(want[i]).epsilon(1e-9));

    // gamma/beta gradients follow the same seeding: dgamma = sum(w*xhat), dbeta = sum(w).
    for (std::size_t c = 0; c < 2; ++c) {
        const double inv_std = 1.0 / std::sqrt(var[c] + 1e-5);
        double dg = 0, db = 0;
        for (std::size_t i = 0; i < m; ++i) {
            const double xhat = (x->value[i * 2 + c] - mean[c]) * inv_std;
            dg += w_t[i * 2 + c] * xhat;
            db += w_t[i * 2 + c];
        }
        CHECK(bn.gamma->grad[c] == doctest::Approx(dg).epsilon(1e-9));
        CHECK(bn.beta->grad[c] == doctest::Approx(db).epsilon(1e-9));
    }
}

TEST_CASE("channel mismatch and bad rank are rejected") {
    BatchNorm<double> bn(4);
    auto x = make_const(Tensor<double>({1, 2, 2, 3}));
    CHECK_THROWS_AS(bn.forward(nullptr, x, true), Error);
    auto x3 = make_const(Tensor<double>({2, 2, 4}));
    CHECK_THROWS_AS(bn.forward(nullptr, x3, true), Error);
}
