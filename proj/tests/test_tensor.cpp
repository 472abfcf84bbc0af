#include <doctest.h>

#include <rtl/ops_core.hpp>
#include <rtl/tape.hpp>
#include <rtl/tensor.hpp>

using namespace rtl;

namespace {
Tape<double>* const NT = nullptr;  // untracked evaluation
}  // namespace

TEST_CASE("tensor construction, shape and element access") {
    Tensor<double> t({2, 3, 4});
    CHECK(t.numel() == 24);
    CHECK(t.ndim() == 3);
    CHECK(t.dim(1) == 3);
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t[i] == 0.0);

    Tensor<double> u({2, 2}, {1, 2, 3, 4});
    CHECK(u[3] == 4.0);
    u.fill(7.0);
    CHECK(u[0] == 7.0);

    auto f = Tensor<float>::full({3}, 2.5f);
    CHECK(f[2] == 2.5f);
    CHECK(Tensor<double>::scalar(9.0).item() == 9.0);
}

TEST_CASE("tensor shape validation errors") {
    CHECK_THROWS_AS(Tensor<double>({2, 0, 3}), Error);
    CHECK_THROWS_AS(Tensor<double>({2, 2}, {1.0, 2.0, 3.0}), Error);
    Tensor<double> t({2, 2});
    CHECK_THROWS_AS((void)t.item(), Error);
    try {
        Tensor<double> bad({0});
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::shape);
        CHECK(e.exit_code() == 4);
    }
}

TEST_CASE("tensor cast and finiteness") {
    Tensor<double> t({3}, {1.5, -2.0, 3.25});
    auto f = t.cast<float>();
    CHECK(f[1] == -2.0f);
    CHECK(t.all_finite());
    t[1] = std::numeric_limits<double>::infinity();
    CHECK_FALSE(t.all_finite());
    t[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("dims helpers") {
    CHECK(dims_numel({2, 3, 4}) == 24);
    CHECK(dims_numel({}) == 1);
    CHECK(dims_str({2, 3}) == "[2,3]");
}

TEST_CASE("tape backward replays in reverse and accumulates gradients") {
    Tape<double> tape;
    auto x = make_var(Tensor<double>({2}, {3.0, -1.0}), true);
    // y = sum((2x)^2) = 4*sum(x^2); dy/dx = 8x
    auto y = sum_all(&tape, square(&tape, scale(&tape, x, 2.0)));
    CHECK(y->value.item() == doctest::Approx(40.0));
    tape.backward(y);
    CHECK(x->grad[0] == doctest::Approx(24.0));
    CHECK(x->grad[1] == doctest::Approx(-8.0));

    // Gradients accumulate across passes when not cleared in between.
    Tape<double> tape2;
    auto y2 = sum_all(&tape2, square(&tape2, scale(&tape2, x, 2.0)));
    tape2.backward(y2);
    CHECK(x->grad[0] == doctest::Approx(48.0));
    CHECK(x->grad[1] == doctest::Approx(-16.0));
}

TEST_CASE("gradient flows into a value used twice") {
    Tape<double> tape;
    auto x = make_var(Tensor<double>({1}, {3.0}), true);
    // y = x*x via square plus x added again: y = x^2 + x -> dy/dx = 2x + 1
    auto y = sum_all(&tape, add(&tape, square(&tape, x), x));
    tape.backward(y);
    CHECK(x->grad[0] == doctest::Approx(7.0));
}

TEST_CASE("ops without grad-requiring inputs record nothing") {
    Tape<double> tape;
    auto a = make_const(Tensor<double>({2}, {1.0, 2.0}));
    auto b = make_const(Tensor<double>({2}, {3.0, 4.0}));
    auto y = add(&tape, a, b);
    CHECK(tape.size() == 0);
    CHECK_FALSE(y->requires_grad);

    // Null tape (pure inference) also records nothing and still computes.
    auto z = add(NT, a, b);
    CHECK(z->value[1] == 6.0);
}

TEST_CASE("backward rejects non-scalar and non-grad losses") {
    Tape<double> tape;
    auto x = make_var(Tensor<double>({2}, {1.0, 2.0}), true);
    auto y = square(&tape, x);
    CHECK_THROWS_AS(tape.backward(y), Error);  // non-scalar
    auto c = make_const(Tensor<double>::scalar(1.0));
    CHECK_THROWS_AS(tape.backward(c), Error);  // no grad
}
