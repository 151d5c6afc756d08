#include "eqdenoise/steerable.hpp"

#include <numbers>

namespace eqd {

BasisIndexSet aliasing_mask(int p) {
    if (p < 3 || p % 2 == 0)
        throw std::invalid_argument("aliasing_mask: filter size must be odd and >= 3, got " +
                                    std::to_string(p));
    BasisIndexSet set;
    set.p = p;
    const int kmax = (p - 1) / 2;
    const double cutoff2 = static_cast<double>(kmax) * kmax;
    for (int k = -kmax; k <= kmax; ++k)
        for (int l = -kmax; l <= kmax; ++l)
            if (static_cast<double>(k) * k + static_cast<double>(l) * l <= cutoff2)
                set.pairs.emplace_back(k, l);
    // Independent real terms: one representative per {(k,l),(-k,-l)} pair.
    for (auto [k, l] : set.pairs) {
        if (k < 0 || (k == 0 && l < 0)) continue;
        set.funcs.push_back({k, l, false});
        if (k != 0 || l != 0) set.funcs.push_back({k, l, true});
    }
    return set;
}

double support_mask(double r, int p, double h) {
    const double r0 = p * h / 2.0;
    const double r1 = (p + 1) * h / 2.0;
    if (r <= r0) return 1.0;
    if (r >= r1) return 0.0;
    return 0.5 * (1.0 + std::cos(std::numbers::pi * (r - r0) / (r1 - r0)));
}

double basis_eval(const BasisFunction& b, int p, double h, double x1, double x2) {
    const double freq = 2.0 * std::numbers::pi / (p * h);
    const double a = freq * (b.k * x1 + b.l * x2);
    const double wave = b.is_sin ? std::sin(a) : std::cos(a);
    return wave * support_mask(std::hypot(x1, x2), p, h);
}

double SteerableFilter::eval(double x1, double x2) const {
    double v = 0.0;
    for (size_t b = 0; b < coeffs.size(); ++b)
        v += coeffs[b] * basis_eval(basis.funcs[b], basis.p, h, x1, x2);
    return v;
}

std::vector<double> sample_matrix(const BasisIndexSet& basis, double h, double theta) {
    const int p = basis.p;
    const int nb = basis.count();
    const double c = std::cos(theta), s = std::sin(theta);
    std::vector<double> mat(static_cast<size_t>(p) * p * nb);
    const double center = (p - 1) / 2.0;
    for (int i = 0; i < p; ++i) {
        for (int j = 0; j < p; ++j) {
            const double x1 = (i - center) * h;
            const double x2 = (j - center) * h;
            // A_theta^{-1} x with A_theta = [[cos, sin], [-sin, cos]]
            const double u1 = c * x1 - s * x2;
            const double u2 = s * x1 + c * x2;
            double* row = mat.data() + (static_cast<size_t>(i) * p + j) * nb;
            for (int b = 0; b < nb; ++b) row[b] = basis_eval(basis.funcs[b], p, h, u1, u2);
        }
    }
    return mat;
}

Tensor sample_filter(const SteerableFilter& f, double theta) {
    const int p = f.basis.p;
    const int nb = f.basis.count();
    const auto mat = sample_matrix(f.basis, f.h, theta);
    Tensor out(Shape{p, p});
    for (int ij = 0; ij < p * p; ++ij) {
        double v = 0.0;
        const double* row = mat.data() + static_cast<size_t>(ij) * nb;
        for (int b = 0; b < nb; ++b) v += f.coeffs[b] * row[b];
        out[ij] = v;
    }
    return out;
}

double coeff_init_std(const BasisIndexSet& basis, int fan_in) {
    // Per-entry filter variance under i.i.d. coeffs: var_c * sum_b mean_ij B_b(ij)^2.
    const auto mat = sample_matrix(basis, 1.0, 0.0);
    const int p = basis.p, nb = basis.count();
    double sum_ms = 0.0;
    for (int b = 0; b < nb; ++b) {
        double ms = 0.0;
        for (int ij = 0; ij < p * p; ++ij) {
            const double v = mat[static_cast<size_t>(ij) * nb + b];
            ms += v * v;
        }
        sum_ms += ms / (p * p);
    }
    const double target_var = 1.0 / static_cast<double>(fan_in);
    return std::sqrt(target_var / std::max(sum_ms, 1e-12));
}

Tensor random_coeffs(const Shape& shape, const BasisIndexSet& basis, int fan_in, Rng& rng) {
    const double sd = coeff_init_std(basis, fan_in);
    Tensor t(shape);
    for (double& v : t.data) v = sd * rng.normal();
    return t;
}

}  // namespace eqd
