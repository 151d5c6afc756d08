#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "eqdenoise/steerable.hpp"

using namespace eqd;

namespace {

constexpr double kPi = std::numbers::pi;

// Independent closed-form oracle for one basis term (no calls into the
// library's mask/eval): cos/sin of 2*pi*(k*x1 + l*x2)/(p*h) times the
// raised-cosine radial mask with plateau radius p*h/2 and cutoff (p+1)*h/2.
double oracle_basis(const BasisFunction& b, int p, double h, double x1, double x2) {
    const double r = std::sqrt(x1 * x1 + x2 * x2);
    const double r0 = p * h / 2.0, r1 = (p + 1) * h / 2.0;
    double mask;
    if (r <= r0)
        mask = 1.0;
    else if (r >= r1)
        mask = 0.0;
    else
        mask = 0.5 * (1.0 + std::cos(kPi * (r - r0) / (r1 - r0)));
    const double arg = 2.0 * kPi * (b.k * x1 + b.l * x2) / (p * h);
    return mask * (b.is_sin ? std::sin(arg) : std::cos(arg));
}

double grid_coord(int i, int p, double h) { return (i - (p - 1) / 2.0) * h; }

Tensor rot90(const Tensor& k) {
    // out(i,j) = in(n-1-j, i): the quarter-turn index permutation used across
    // the project for cell-centered grids.
    const int n = k.shape[k.rank() - 1];
    Tensor out = k;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out.data[i * n + j] = k.data[(n - 1 - j) * n + i];
    return out;
}

}  // namespace

TEST_CASE("aliasing_mask: radial cutoff, symmetry, brute-force count") {
    BasisIndexSet b3 = aliasing_mask(3);
    CHECK(b3.p == 3);
    for (auto [k, l] : b3.pairs) CHECK(std::sqrt(double(k * k + l * l)) <= 1.0 + 1e-12);

    BasisIndexSet b5 = aliasing_mask(5);
    for (auto [k, l] : b5.pairs) {
        bool has_swap = false;
        for (auto [k2, l2] : b5.pairs) has_swap = has_swap || (k2 == l && l2 == k);
        CHECK(has_swap);
    }

    // Brute-force enumeration of the cutoff predicate over a superset range.
    int expect_pairs = 0;
    for (int k = -5; k <= 5; ++k)
        for (int l = -5; l <= 5; ++l)
            if (std::sqrt(double(k * k + l * l)) <= 2.0 + 1e-12) ++expect_pairs;
    CHECK(static_cast<int>(b5.pairs.size()) == expect_pairs);

    // Independent basis functions: one frequency per +/- pair, cos and sin,
    // no sin companion for DC.
    const int n_freq = (expect_pairs - 1) / 2;  // excluding DC
    CHECK(b5.count() == 1 + 2 * n_freq);
}

TEST_CASE("basis_eval: DC term equals the mask; closed form at rotated points") {
    const int p = 5;
    const double h = 0.1;
    BasisFunction dc{0, 0, false};
    CHECK(basis_eval(dc, p, h, 0.01, -0.02) == doctest::Approx(1.0));  // inside plateau

    BasisIndexSet basis = aliasing_mask(p);
    const double theta = 0.6;
    const double c = std::cos(theta), s = std::sin(theta);
    for (const BasisFunction& b : basis.funcs)
        for (double x1 : {-0.17, 0.05, 0.21})
            for (double x2 : {-0.2, 0.11}) {
                const double u1 = c * x1 - s * x2;  // A_theta^{-1} x
                const double u2 = s * x1 + c * x2;
                CHECK(basis_eval(b, p, h, u1, u2) ==
                      doctest::Approx(oracle_basis(b, p, h, u1, u2)).epsilon(1e-12));
            }

    // Even symmetry of cos terms: value at x equals value at -x.
    for (const BasisFunction& b : basis.funcs)
        if (!b.is_sin)
            CHECK(basis_eval(b, p, h, 0.13, -0.07) ==
                  doctest::Approx(basis_eval(b, p, h, -0.13, 0.07)).epsilon(1e-12));
}

TEST_CASE("sample_filter: theta=0 canonical sampling; DC-only filter is rotation invariant") {
    const int p = 3;
    const double h = 0.2;
    SteerableFilter f;
    f.basis = aliasing_mask(p);
    f.h = h;
    f.coeffs.assign(f.basis.count(), 0.0);
    Rng rng(11);
    for (double& c : f.coeffs) c = rng.uniform(-1.0, 1.0);

    Tensor k0 = sample_filter(f, 0.0);
    REQUIRE(k0.shape == Shape{p, p});
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
            double expect = 0.0;
            for (int b = 0; b < f.basis.count(); ++b)
                expect += f.coeffs[b] *
                          oracle_basis(f.basis.funcs[b], p, h, grid_coord(i, p, h),
                                       grid_coord(j, p, h));
            CHECK(k0.data[i * p + j] == doctest::Approx(expect).epsilon(1e-12));
        }

    SteerableFilter dc = f;
    dc.coeffs.assign(f.basis.count(), 0.0);
    dc.coeffs[0] = 1.3;  // DC is the first independent function
    REQUIRE(!f.basis.funcs[0].is_sin);
    REQUIRE(f.basis.funcs[0].k == 0);
    Tensor d0 = sample_filter(dc, 0.0);
    for (double th : {0.3, 1.1, 2.9}) {
        Tensor dt = sample_filter(dc, th);
        for (long long i = 0; i < d0.size(); ++i) CHECK(dt[i] == doctest::Approx(d0[i]).epsilon(1e-12));
    }
}

TEST_CASE("sample_filter: steerability and quarter-turn exactness") {
    const int p = 5;
    const double h = 0.15;
    SteerableFilter f;
    f.basis = aliasing_mask(p);
    f.h = h;
    f.coeffs.assign(f.basis.count(), 0.0);
    Rng rng(12);
    for (double& c : f.coeffs) c = rng.uniform(-1.0, 1.0);

    const double t1 = 0.4, t2 = 1.25;
    Tensor sampled = sample_filter(f, t1 + t2);
    const double c = std::cos(t1 + t2), s = std::sin(t1 + t2);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
            const double x1 = grid_coord(i, p, h), x2 = grid_coord(j, p, h);
            CHECK(sampled.data[i * p + j] ==
                  doctest::Approx(f.eval(c * x1 - s * x2, s * x1 + c * x2)).epsilon(1e-12));
        }

    for (double th : {0.0, 0.37, 2.0}) {
        Tensor a = sample_filter(f, th + kPi / 2.0);
        Tensor b = rot90(sample_filter(f, th));
        for (long long i = 0; i < a.size(); ++i)
            CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    }
}

TEST_CASE("compact support: the filter vanishes at and beyond radius (p+1)h/2") {
    const int p = 3;
    const double h = 0.2;
    SteerableFilter f;
    f.basis = aliasing_mask(p);
    f.h = h;
    f.coeffs.assign(f.basis.count(), 1.0);
    CHECK(f.support_radius() == doctest::Approx((p + 1) * h / 2.0));
    const double R = f.support_radius();
    for (double r : {R, R * 1.0001, R * 2.0})
        for (double ang : {0.0, 0.9, 2.2, 4.4}) CHECK(f.eval(r * std::cos(ang), r * std::sin(ang)) == 0.0);
}

TEST_CASE("sample_matrix: sampling is linear in coefficients") {
    const int p = 3;
    const double h = 0.25, theta = 0.8;
    BasisIndexSet basis = aliasing_mask(p);
    std::vector<double> B = sample_matrix(basis, h, theta);
    REQUIRE(static_cast<int>(B.size()) == p * p * basis.count());

    SteerableFilter f;
    f.basis = basis;
    f.h = h;
    f.coeffs.assign(basis.count(), 0.0);
    Rng rng(13);
    for (double& c : f.coeffs) c = rng.uniform(-1.0, 1.0);
    Tensor sampled = sample_filter(f, theta);
    for (int ij = 0; ij < p * p; ++ij) {
        double dot = 0.0;
        for (int b = 0; b < basis.count(); ++b) dot += B[ij * basis.count() + b] * f.coeffs[b];
        CHECK(sampled[ij] == doctest::Approx(dot).epsilon(1e-12));
    }
}

TEST_CASE("coeff_init_std: sampled filter entries match fan-in variance by Monte Carlo") {
    const int p = 3, fan_in = 9;
    BasisIndexSet basis = aliasing_mask(p);
    Rng rng(14);
    double sq = 0.0;
    long long count = 0;
    for (int trial = 0; trial < 4000; ++trial) {
        Tensor c = random_coeffs(Shape{basis.count()}, basis, fan_in, rng);
        SteerableFilter f;
        f.basis = basis;
        f.h = 1.0;
        f.coeffs.assign(c.data.begin(), c.data.end());
        Tensor k = sample_filter(f, 0.0);
        for (double v : k.data) sq += v * v;
        count += k.size();
    }
    const double var = sq / count;
    CHECK(var == doctest::Approx(1.0 / fan_in).epsilon(0.1));
}
