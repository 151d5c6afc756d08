#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "eqdenoise/ops.hpp"
#include "eqdenoise/resample.hpp"
#include "eqdenoise/rng.hpp"

using namespace eqd;

namespace {

constexpr double kPi = std::numbers::pi;

Tensor random_tensor(const Shape& s, Rng& rng) {
    Tensor t(s);
    for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
    return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.same_shape(b));
    double m = 0.0;
    for (long long i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

using ValueOp = Var (*)(const Var&);

void check_grad(ValueOp op, const Tensor& x0, const Shape& out_shape, Rng& rng) {
    Tensor w = random_tensor(out_shape, rng);
    Var x = Var::leaf(x0, true);
    Var y = sum(mul(op(x), Var::leaf(w)));
    y.backward();
    const double step = 1e-5;
    for (long long i = 0; i < x0.size(); ++i) {
        Tensor xp = x0, xm = x0;
        xp[i] += step;
        xm[i] -= step;
        const double fp = sum(mul(op(Var::leaf(xp)), Var::leaf(w))).value()[0];
        const double fm = sum(mul(op(Var::leaf(xm)), Var::leaf(w))).value()[0];
        const double fd = (fp - fm) / (2.0 * step);
        CHECK(std::fabs(x.grad()[i] - fd) <= 1e-6 * std::max(1.0, std::fabs(fd)));
    }
}

}  // namespace

TEST_CASE("maxpool_down: constants, window-max oracle, odd n rejected") {
    Var c = Var::leaf(Tensor(Shape{1, 4, 4}, 3.25));
    Tensor cv = maxpool_down(c).value();
    for (double v : cv.data) CHECK(v == 3.25);

    Tensor in(Shape{1, 4, 4});
    // blocks [[1,2],[3,4]], [[5,6],[7,8]], [[-1,0],[2,1]], [[9,9],[9,9]]
    const double rows[4][4] = {{1, 2, 5, 6}, {3, 4, 7, 8}, {-1, 0, 9, 9}, {2, 1, 9, 9}};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) in.at3(0, i, j) = rows[i][j];
    Tensor out = maxpool_down(Var::leaf(in)).value();
    CHECK(out.at3(0, 0, 0) == 4);
    CHECK(out.at3(0, 0, 1) == 8);
    CHECK(out.at3(0, 1, 0) == 2);
    CHECK(out.at3(0, 1, 1) == 9);

    CHECK_THROWS_AS(maxpool_down(Var::leaf(Tensor(Shape{1, 5, 5}))), std::invalid_argument);
}

TEST_CASE("maxpool_down: gradient goes to the argmax; row-major tie break") {
    Tensor in(Shape{1, 2, 2});
    in.at3(0, 0, 0) = 1.0;
    in.at3(0, 0, 1) = 7.0;
    in.at3(0, 1, 0) = 7.0;  // tie with (0,1): first row-major index wins
    in.at3(0, 1, 1) = 0.0;
    Var x = Var::leaf(in, true);
    maxpool_down(x).backward();
    CHECK(x.grad().at3(0, 0, 0) == 0.0);
    CHECK(x.grad().at3(0, 0, 1) == 1.0);
    CHECK(x.grad().at3(0, 1, 0) == 0.0);
    CHECK(x.grad().at3(0, 1, 1) == 0.0);
}

TEST_CASE("stride_down: fixed representative per window") {
    Tensor in(Shape{1, 4, 4});
    for (int i = 0; i < 16; ++i) in[i] = i;  // distinct integers
    Tensor out = stride_down(Var::leaf(in)).value();
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            CHECK(out.at3(0, i, j) == in.at3(0, 2 * i + kStrideRepRow, 2 * j + kStrideRepCol));
    CHECK_THROWS_AS(stride_down(Var::leaf(Tensor(Shape{1, 6, 5}))), std::invalid_argument);
}

TEST_CASE("stride_down: 90-degree rotation does not commute on generic inputs") {
    // The fixed window corner is not rotation symmetric; the discrepancy is
    // what the bound-checked mesh sweeps see decay at O(h).
    Rng rng(41);
    Tensor F = random_tensor({4, 8, 8}, rng);
    GroupFeatureMap G{F, 4, 0.25};
    const double theta = kPi / 2.0;
    GroupFeatureMap a = stride_down(rotate_feature(G, theta));
    GroupFeatureMap b = rotate_feature(stride_down(G), theta);
    CHECK(max_abs_diff(a.F, b.F) > 1e-3);
}

TEST_CASE("maxpool/nearest: exact 90-degree commutation at t=4") {
    Rng rng(42);
    Tensor F = random_tensor({4, 8, 8}, rng);
    GroupFeatureMap G{F, 4, 0.25};
    const double theta = kPi / 2.0;
    {
        GroupFeatureMap a = maxpool_down(rotate_feature(G, theta));
        GroupFeatureMap b = rotate_feature(maxpool_down(G), theta);
        CHECK(max_abs_diff(a.F, b.F) == 0.0);
    }
    {
        GroupFeatureMap a = upsample_nearest(rotate_feature(G, theta));
        GroupFeatureMap b = rotate_feature(upsample_nearest(G), theta);
        CHECK(max_abs_diff(a.F, b.F) == 0.0);
    }
}

TEST_CASE("upsample_nearest: 2x2 block replication") {
    Tensor in(Shape{1, 2, 2});
    in.at3(0, 0, 0) = 1;  // a
    in.at3(0, 0, 1) = 2;  // b
    in.at3(0, 1, 0) = 3;  // c
    in.at3(0, 1, 1) = 4;  // d
    Tensor out = upsample_nearest(Var::leaf(in)).value();
    REQUIRE(out.shape == Shape{1, 4, 4});
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(out.at3(0, i, j) == in.at3(0, i / 2, j / 2));
}

TEST_CASE("upsample_bilinear: constants, linear fields, the {9,3,3,1}/16 stencil") {
    Var c = Var::leaf(Tensor(Shape{1, 2, 2}, -0.75));
    Tensor cv = upsample_bilinear(c).value();
    for (double v : cv.data) CHECK(v == doctest::Approx(-0.75));

    // Linear field on cell-centered coordinates reproduces exactly in the
    // interior (fine cells whose four neighbors are real, i.e. not clamped).
    const int n = 6;
    const double a = 1.3, b = -0.6, h = 0.5;
    Tensor in(Shape{1, n, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            in.at3(0, i, j) = a * (i - (n - 1) / 2.0) * h + b * (j - (n - 1) / 2.0) * h;
    Tensor out = upsample_bilinear(Var::leaf(in)).value();
    const int m = 2 * n;
    const double hf = h / 2.0;
    for (int i = 1; i < m - 1; ++i)
        for (int j = 1; j < m - 1; ++j) {
            const double expect = a * (i - (m - 1) / 2.0) * hf + b * (j - (m - 1) / 2.0) * hf;
            CHECK(out.at3(0, i, j) == doctest::Approx(expect).epsilon(1e-12));
        }

    // Weight-enumeration oracle: fine sample (1,1) of a 2x2 coarse grid sits
    // a quarter cell inside, weights {9,3,3,1}/16 on values {1,3,5,7}.
    Tensor q(Shape{1, 2, 2});
    q.at3(0, 0, 0) = 1;
    q.at3(0, 0, 1) = 3;
    q.at3(0, 1, 0) = 5;
    q.at3(0, 1, 1) = 7;
    Tensor qo = upsample_bilinear(Var::leaf(q)).value();
    CHECK(qo.at3(0, 1, 1) == doctest::Approx((9 * 1 + 3 * 3 + 3 * 5 + 1 * 7) / 16.0));
}

TEST_CASE("value-range invariants") {
    Rng rng(43);
    Tensor in = random_tensor({2, 8, 8}, rng);
    double lo = 1e9, hi = -1e9;
    for (double v : in.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    auto subset_of_input = [&](const Tensor& out) {
        for (double v : out.data) {
            bool found = false;
            for (double u : in.data) found = found || u == v;
            CHECK(found);
        }
    };
    subset_of_input(maxpool_down(Var::leaf(in)).value());
    subset_of_input(stride_down(Var::leaf(in)).value());
    subset_of_input(upsample_nearest(Var::leaf(in)).value());
    Tensor bil = upsample_bilinear(Var::leaf(in)).value();
    for (double v : bil.data) {
        CHECK(v >= lo - 1e-12);
        CHECK(v <= hi + 1e-12);
    }
}

TEST_CASE("homogeneity and linearity") {
    Rng rng(44);
    Tensor x = random_tensor({1, 8, 8}, rng), y = random_tensor({1, 8, 8}, rng);
    const double alpha = 2.75;
    Tensor ax(x.shape);
    for (long long i = 0; i < x.size(); ++i) ax[i] = alpha * x[i];

    const ValueOp ops[] = {&maxpool_down, &stride_down, &upsample_nearest, &upsample_bilinear};
    for (ValueOp op : ops) {
        Tensor o1 = op(Var::leaf(ax)).value();
        Tensor o2 = op(Var::leaf(x)).value();
        for (long long i = 0; i < o1.size(); ++i)
            CHECK(o1[i] == doctest::Approx(alpha * o2[i]).epsilon(1e-12));
    }
    // All but maxpool are linear.
    const ValueOp linear_ops[] = {&stride_down, &upsample_nearest, &upsample_bilinear};
    Tensor xy(x.shape);
    for (long long i = 0; i < x.size(); ++i) xy[i] = x[i] + y[i];
    for (ValueOp op : linear_ops) {
        Tensor o1 = op(Var::leaf(xy)).value();
        Tensor o2 = op(Var::leaf(x)).value();
        Tensor o3 = op(Var::leaf(y)).value();
        for (long long i = 0; i < o1.size(); ++i)
            CHECK(o1[i] == doctest::Approx(o2[i] + o3[i]).epsilon(1e-12));
    }
}

TEST_CASE("mesh bookkeeping: h doubles down, halves up, shapes round trip") {
    Rng rng(45);
    GroupFeatureMap F{random_tensor({4, 8, 8}, rng), 4, 0.25};
    GroupFeatureMap down = maxpool_down(F);
    CHECK(down.h == doctest::Approx(0.5));
    CHECK(down.n() == 4);
    GroupFeatureMap up = upsample_bilinear(down);
    CHECK(up.h == doctest::Approx(0.25));
    CHECK(up.n() == 8);
    CHECK(upsample_nearest(stride_down(F)).F.shape == F.F.shape);
}

TEST_CASE("gradients of all four operators match finite differences") {
    Rng rng(46);
    Tensor down_in = random_tensor({1, 4, 4}, rng);
    // Separate maxpool windows from ties: perturb entries to be distinct.
    for (long long i = 0; i < down_in.size(); ++i) down_in[i] += 0.01 * static_cast<double>(i);
    check_grad(&maxpool_down, down_in, {1, 2, 2}, rng);
    check_grad(&stride_down, down_in, {1, 2, 2}, rng);
    Tensor up_in = random_tensor({1, 3, 3}, rng);
    check_grad(&upsample_nearest, up_in, {1, 6, 6}, rng);
    check_grad(&upsample_bilinear, up_in, {1, 6, 6}, rng);
}
