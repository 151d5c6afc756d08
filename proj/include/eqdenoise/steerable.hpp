#pragma once

#include "eqdenoise/rng.hpp"
#include "eqdenoise/tensor.hpp"

namespace eqd {

// One real 2D Fourier basis term: cos or sin of 2*pi*(k*x1 + l*x2)/(p*h),
// times a radial support mask.
struct BasisFunction {
    int k = 0;
    int l = 0;
    bool is_sin = false;
};

// Frequencies retained for a p x p filter. `pairs` is the full symmetric
// retained set; `funcs` the independent real basis functions (one frequency
// per +/- pair, cos and sin variants, no sin for DC).
struct BasisIndexSet {
    int p = 0;
    std::vector<std::pair<int, int>> pairs;
    std::vector<BasisFunction> funcs;
    int count() const { return static_cast<int>(funcs.size()); }
};

// Radial Nyquist cutoff: keep (k,l) with sqrt(k^2+l^2) <= (p-1)/2.
// Frequencies above that alias under rotated sampling on a p x p grid.
BasisIndexSet aliasing_mask(int p);

// Smooth radial support mask: 1 inside radius p*h/2, raised-cosine roll-off
// to 0 at (p+1)*h/2, identically 0 beyond.
double support_mask(double r, int p, double h);

double basis_eval(const BasisFunction& b, int p, double h, double x1, double x2);

// Continuous filter phi(x) = sum_b coeffs[b] * basis_b(x), compactly
// supported in the ball of radius (p+1)*h/2.
struct SteerableFilter {
    BasisIndexSet basis;
    double h = 1.0;
    std::vector<double> coeffs;

    int p() const { return basis.p; }
    double support_radius() const { return (basis.p + 1) * h / 2.0; }
    double eval(double x1, double x2) const;
};

// Sample phi(A_theta^{-1} x) on the cell-centered p x p grid.
Tensor sample_filter(const SteerableFilter& f, double theta);

// Basis evaluation matrix for angle theta: row-major [p*p, count], entry
// (ij, b) = basis_b(A_theta^{-1} x_ij). sample_filter == B(theta) * coeffs.
std::vector<double> sample_matrix(const BasisIndexSet& basis, double h, double theta);

// Std-dev for i.i.d. coefficient init such that sampled p x p filter entries
// match the per-entry variance of fan-in-scaled conv init (1/fan_in).
double coeff_init_std(const BasisIndexSet& basis, int fan_in);

Tensor random_coeffs(const Shape& shape, const BasisIndexSet& basis, int fan_in, Rng& rng);

}  // namespace eqd
