#include "eqdenoise/group_ops.hpp"

#include <numbers>

#include "eqdenoise/kernels.hpp"
#include "eqdenoise/ops.hpp"

namespace eqd {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double theta) {
    double a = std::fmod(theta, kTwoPi);
    if (a < 0) a += kTwoPi;
    return a;
}
}  // namespace

int RotationGroup::element_index(double theta) const {
    const double a = wrap_angle(theta);
    for (int k = 0; k < t; ++k) {
        double d = std::fabs(a - angle(k));
        d = std::min(d, kTwoPi - d);
        if (d < 1e-9) return k;
    }
    return -1;
}

namespace {

// Exact quarter-turn: out(i,j) = in(n-1-j, i), applied q times.
Tensor quarter_rot(const Tensor& img, int q) {
    q = ((q % 4) + 4) % 4;
    Tensor cur = img;
    for (int r = 0; r < q; ++r) {
        const int c = cur.shape[0], n = cur.shape[1];
        Tensor next(cur.shape);
        for (int ch = 0; ch < c; ++ch)
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) next.at3(ch, i, j) = cur.at3(ch, n - 1 - j, i);
        cur = std::move(next);
    }
    return cur;
}

}  // namespace

Tensor rotate_planes(const Tensor& img, double theta) {
    const double a = wrap_angle(theta);
    const double quarters = a / (std::numbers::pi / 2.0);
    const double nearest = std::round(quarters);
    if (std::fabs(quarters - nearest) < 1e-12) return quarter_rot(img, static_cast<int>(nearest));

    const int c = img.shape[0], n = img.shape[1];
    const double cs = std::cos(a), sn = std::sin(a);
    const double center = (n - 1) / 2.0;
    Tensor out(img.shape);
    for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                // A_theta^{-1} x_ij in index coordinates (mesh size cancels)
                const double x1 = i - center, x2 = j - center;
                const double fi = cs * x1 - sn * x2 + center;
                const double fj = sn * x1 + cs * x2 + center;
                const int i0 = static_cast<int>(std::floor(fi));
                const int j0 = static_cast<int>(std::floor(fj));
                const double wi = fi - i0, wj = fj - j0;
                double acc = 0.0;
                for (int di = 0; di <= 1; ++di) {
                    const int ii = i0 + di;
                    if (ii < 0 || ii >= n) continue;
                    for (int dj = 0; dj <= 1; ++dj) {
                        const int jj = j0 + dj;
                        if (jj < 0 || jj >= n) continue;
                        const double w = (di ? wi : 1.0 - wi) * (dj ? wj : 1.0 - wj);
                        acc += w * img.at3(ch, ii, jj);
                    }
                }
                out.at3(ch, i, j) = acc;
            }
        }
    }
    return out;
}

ImageGrid rotate_image(const ImageGrid& img, double theta) {
    return ImageGrid{rotate_planes(img.I, theta), img.h};
}

Tensor rotate_feature_planes(const Tensor& F, int t, int shift) {
    const int ctot = F.shape[0];
    if (ctot % t != 0)
        throw std::invalid_argument("rotate_feature: channel count " + std::to_string(ctot) +
                                    " not a multiple of group order " + std::to_string(t));
    const int c = ctot / t;
    const int n = F.shape[1];
    const double theta = kTwoPi * shift / t;
    Tensor out(F.shape);
    const long long plane = static_cast<long long>(n) * n;
    for (int k = 0; k < t; ++k) {
        const int src = ((k - shift) % t + t) % t;
        Tensor slice(Shape{c, n, n});
        std::copy(F.data.begin() + src * c * plane, F.data.begin() + (src + 1) * c * plane,
                  slice.data.begin());
        Tensor rotated = rotate_planes(slice, theta);
        std::copy(rotated.data.begin(), rotated.data.end(), out.data.begin() + k * c * plane);
    }
    return out;
}

GroupFeatureMap rotate_feature(const GroupFeatureMap& F, double theta) {
    RotationGroup group(F.t);
    const int s = group.element_index(theta);
    if (s < 0)
        throw std::invalid_argument("rotate_feature: angle " + std::to_string(theta) +
                                    " is not an element of the order-" + std::to_string(F.t) +
                                    " rotation group");
    return GroupFeatureMap{rotate_feature_planes(F.F, F.t, s), F.t, F.h};
}

namespace {

std::vector<std::vector<double>> sample_matrices(const BasisIndexSet& basis, int t) {
    std::vector<std::vector<double>> mats(t);
    for (int k = 0; k < t; ++k) mats[k] = sample_matrix(basis, 1.0, kTwoPi * k / t);
    return mats;
}

}  // namespace

Var lift_kernel(const Var& coeffs, const BasisIndexSet& basis, int t) {
    const Tensor& cv = coeffs.value();
    if (cv.rank() != 3 || cv.shape[2] != basis.count())
        throw std::invalid_argument("lift_kernel: coeffs must be [Cout,Cin,nb=" +
                                    std::to_string(basis.count()) + "], got " +
                                    shape_str(cv.shape));
    const int cout = cv.shape[0], cin = cv.shape[1], nb = cv.shape[2], p = basis.p;
    auto mats = std::make_shared<std::vector<std::vector<double>>>(sample_matrices(basis, t));

    Tensor ker(Shape{t * cout, cin, p, p});
    for (int k = 0; k < t; ++k) {
        const auto& B = (*mats)[k];
        for (int co = 0; co < cout; ++co)
            for (int ci = 0; ci < cin; ++ci) {
                const double* c = cv.data.data() + (static_cast<size_t>(co) * cin + ci) * nb;
                for (int ij = 0; ij < p * p; ++ij) {
                    double v = 0.0;
                    const double* row = B.data() + static_cast<size_t>(ij) * nb;
                    for (int b = 0; b < nb; ++b) v += c[b] * row[b];
                    ker.at4(k * cout + co, ci, ij / p, ij % p) = v;
                }
            }
    }
    return detail::make_op("lift_kernel", std::move(ker), {coeffs},
                           [mats, t, cout, cin, nb, p](Node& n) {
                               Node* pc = n.parents[0].get();
                               Tensor g(pc->value.shape);
                               for (int k = 0; k < t; ++k) {
                                   const auto& B = (*mats)[k];
                                   for (int co = 0; co < cout; ++co)
                                       for (int ci = 0; ci < cin; ++ci) {
                                           double* gc = g.data.data() +
                                                        (static_cast<size_t>(co) * cin + ci) * nb;
                                           for (int ij = 0; ij < p * p; ++ij) {
                                               const double gk = n.grad.at4(k * cout + co, ci,
                                                                            ij / p, ij % p);
                                               const double* row =
                                                   B.data() + static_cast<size_t>(ij) * nb;
                                               for (int b = 0; b < nb; ++b) gc[b] += gk * row[b];
                                           }
                                       }
                               }
                               pc->accumulate(g);
                           });
}

Var group_kernel(const Var& coeffs, const BasisIndexSet& basis, int t) {
    const Tensor& cv = coeffs.value();
    if (cv.rank() != 4 || cv.shape[2] != t || cv.shape[3] != basis.count())
        throw std::invalid_argument("group_kernel: coeffs must be [Cout,Cin,t,nb], got " +
                                    shape_str(cv.shape));
    const int cout = cv.shape[0], cin = cv.shape[1], nb = cv.shape[3], p = basis.p;
    auto mats = std::make_shared<std::vector<std::vector<double>>>(sample_matrices(basis, t));

    auto coeff_ptr = [&](const Tensor& tns, int co, int ci, int s) {
        return tns.data.data() + ((static_cast<size_t>(co) * cin + ci) * t + s) * nb;
    };

    Tensor ker(Shape{t * cout, t * cin, p, p});
    for (int k = 0; k < t; ++k) {
        const auto& B = (*mats)[k];
        for (int s = 0; s < t; ++s) {
            const int kp = (k + s) % t;  // input orientation read through filter index s
            for (int co = 0; co < cout; ++co)
                for (int ci = 0; ci < cin; ++ci) {
                    const double* c = coeff_ptr(cv, co, ci, s);
                    for (int ij = 0; ij < p * p; ++ij) {
                        double v = 0.0;
                        const double* row = B.data() + static_cast<size_t>(ij) * nb;
                        for (int b = 0; b < nb; ++b) v += c[b] * row[b];
                        ker.at4(k * cout + co, kp * cin + ci, ij / p, ij % p) = v;
                    }
                }
        }
    }
    return detail::make_op(
        "group_kernel", std::move(ker), {coeffs}, [mats, t, cout, cin, nb, p](Node& n) {
            Node* pc = n.parents[0].get();
            Tensor g(pc->value.shape);
            for (int k = 0; k < t; ++k) {
                const auto& B = (*mats)[k];
                for (int s = 0; s < t; ++s) {
                    const int kp = (k + s) % t;
                    for (int co = 0; co < cout; ++co)
                        for (int ci = 0; ci < cin; ++ci) {
                            double* gc = g.data.data() +
                                         ((static_cast<size_t>(co) * cin + ci) * t + s) * nb;
                            for (int ij = 0; ij < p * p; ++ij) {
                                const double gk =
                                    n.grad.at4(k * cout + co, kp * cin + ci, ij / p, ij % p);
                                const double* row = B.data() + static_cast<size_t>(ij) * nb;
                                for (int b = 0; b < nb; ++b) gc[b] += gk * row[b];
                            }
                        }
                }
            }
            pc->accumulate(g);
        });
}

Var lift_conv(const Var& image, const Var& coeffs, const BasisIndexSet& basis, int t) {
    Var ker = lift_kernel(coeffs, basis, t);
    return conv2d(image, ker, 1, (basis.p - 1) / 2);
}

Var group_conv(const Var& features, const Var& coeffs, const BasisIndexSet& basis, int t) {
    if (features.value().shape[0] % t != 0)
        throw std::invalid_argument("group_conv: feature channels " +
                                    std::to_string(features.value().shape[0]) +
                                    " not a multiple of group order " + std::to_string(t));
    if (features.value().shape[0] / t != coeffs.value().shape[1])
        throw std::invalid_argument(
            "group_conv: feature base channels " +
            std::to_string(features.value().shape[0] / t) + " != coeff C_in " +
            std::to_string(coeffs.value().shape[1]));
    Var ker = group_kernel(coeffs, basis, t);
    return conv2d(features, ker, 1, (basis.p - 1) / 2);
}

Var project(const Var& features, int t) {
    const Tensor& fv = features.value();
    if (fv.shape[0] % t != 0)
        throw std::invalid_argument("project: channels not a multiple of group order");
    const int c = fv.shape[0] / t;
    const int n = fv.shape[1];
    const long long plane = static_cast<long long>(n) * fv.shape[2];
    Tensor out(Shape{c, n, fv.shape[2]});
    for (int ch = 0; ch < c; ++ch)
        for (long long i = 0; i < plane; ++i) {
            double s = 0.0;
            for (int k = 0; k < t; ++k) s += fv.data[(k * c + ch) * plane + i];
            out.data[ch * plane + i] = s / t;
        }
    return detail::make_op("project", std::move(out), {features}, [t, c, plane](Node& n) {
        Node* p = n.parents[0].get();
        Tensor g(p->value.shape);
        for (int ch = 0; ch < c; ++ch)
            for (long long i = 0; i < plane; ++i) {
                const double gv = n.grad.data[ch * plane + i] / t;
                for (int k = 0; k < t; ++k) g.data[(k * c + ch) * plane + i] = gv;
            }
        p->accumulate(g);
    });
}

namespace {

// Sampled basis matrix on the (2m+1)^2 mesh-spaced grid at angle theta, with
// the h^2 quadrature weight folded in. Row-major [(2m+1)^2, nb].
std::vector<double> quad_matrix(const BasisIndexSet& basis, double filter_h, double theta,
                                double mesh_h, int m) {
    const int q = 2 * m + 1, nb = basis.count();
    const double c = std::cos(theta), s = std::sin(theta);
    const double w = mesh_h * mesh_h;
    std::vector<double> mat(static_cast<size_t>(q) * q * nb);
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j) {
            const double x1 = (i - m) * mesh_h;
            const double x2 = (j - m) * mesh_h;
            const double u1 = c * x1 - s * x2;
            const double u2 = s * x1 + c * x2;
            double* row = mat.data() + (static_cast<size_t>(i) * q + j) * nb;
            for (int b = 0; b < nb; ++b)
                row[b] = w * basis_eval(basis.funcs[b], basis.p, filter_h, u1, u2);
        }
    return mat;
}

int quad_taps(const BasisIndexSet& basis, double filter_h, double mesh_h) {
    if (filter_h <= 0 || mesh_h <= 0)
        throw std::invalid_argument("quadrature conv: mesh and filter spacing must be > 0");
    const double radius = (basis.p + 1) * filter_h / 2.0;
    return std::max(1, static_cast<int>(std::floor(radius / mesh_h)));
}

}  // namespace

Tensor quad_lift_kernel(const Tensor& coeffs, const BasisIndexSet& basis, double filter_h, int t,
                        double mesh_h) {
    if (coeffs.rank() != 3 || coeffs.shape[2] != basis.count())
        throw std::invalid_argument("quad_lift_kernel: coeffs must be [Cout,Cin,nb], got " +
                                    shape_str(coeffs.shape));
    const int cout = coeffs.shape[0], cin = coeffs.shape[1], nb = coeffs.shape[2];
    const int m = quad_taps(basis, filter_h, mesh_h), q = 2 * m + 1;
    Tensor ker(Shape{t * cout, cin, q, q});
    for (int k = 0; k < t; ++k) {
        const auto B = quad_matrix(basis, filter_h, kTwoPi * k / t, mesh_h, m);
        for (int co = 0; co < cout; ++co)
            for (int ci = 0; ci < cin; ++ci) {
                const double* c = coeffs.data.data() + (static_cast<size_t>(co) * cin + ci) * nb;
                for (int ij = 0; ij < q * q; ++ij) {
                    double v = 0.0;
                    const double* row = B.data() + static_cast<size_t>(ij) * nb;
                    for (int b = 0; b < nb; ++b) v += c[b] * row[b];
                    ker.at4(k * cout + co, ci, ij / q, ij % q) = v;
                }
            }
    }
    return ker;
}

Tensor quad_group_kernel(const Tensor& coeffs, const BasisIndexSet& basis, double filter_h, int t,
                         double mesh_h) {
    if (coeffs.rank() != 4 || coeffs.shape[2] != t || coeffs.shape[3] != basis.count())
        throw std::invalid_argument("quad_group_kernel: coeffs must be [Cout,Cin,t,nb], got " +
                                    shape_str(coeffs.shape));
    const int cout = coeffs.shape[0], cin = coeffs.shape[1], nb = coeffs.shape[3];
    const int m = quad_taps(basis, filter_h, mesh_h), q = 2 * m + 1;
    Tensor ker(Shape{t * cout, t * cin, q, q});
    for (int k = 0; k < t; ++k) {
        const auto B = quad_matrix(basis, filter_h, kTwoPi * k / t, mesh_h, m);
        for (int s = 0; s < t; ++s) {
            const int kp = (k + s) % t;
            for (int co = 0; co < cout; ++co)
                for (int ci = 0; ci < cin; ++ci) {
                    const double* c =
                        coeffs.data.data() + ((static_cast<size_t>(co) * cin + ci) * t + s) * nb;
                    for (int ij = 0; ij < q * q; ++ij) {
                        double v = 0.0;
                        const double* row = B.data() + static_cast<size_t>(ij) * nb;
                        for (int b = 0; b < nb; ++b) v += c[b] * row[b];
                        ker.at4(k * cout + co, kp * cin + ci, ij / q, ij % q) = v;
                    }
                }
        }
    }
    return ker;
}

GroupFeatureMap quad_lift_conv(const ImageGrid& img, const Tensor& coeffs,
                               const BasisIndexSet& basis, double filter_h,
                               const RotationGroup& group) {
    Tensor ker = quad_lift_kernel(coeffs, basis, filter_h, group.t, img.h);
    const int pad = (ker.shape[2] - 1) / 2;
    Tensor out(Shape{ker.shape[0], img.n(), img.n()});
    kernels::conv2d_forward(img.I, ker, 1, pad, out);
    return GroupFeatureMap{std::move(out), group.t, img.h};
}

GroupFeatureMap quad_group_conv(const GroupFeatureMap& F, const Tensor& coeffs,
                                const BasisIndexSet& basis, double filter_h,
                                const RotationGroup& group) {
    if (F.t != group.t)
        throw std::invalid_argument("quad_group_conv: feature group order " +
                                    std::to_string(F.t) + " != group order " +
                                    std::to_string(group.t));
    Tensor ker = quad_group_kernel(coeffs, basis, filter_h, group.t, F.h);
    const int pad = (ker.shape[2] - 1) / 2;
    Tensor out(Shape{ker.shape[0], F.n(), F.n()});
    kernels::conv2d_forward(F.F, ker, 1, pad, out);
    return GroupFeatureMap{std::move(out), group.t, F.h};
}

GroupFeatureMap lift_conv(const ImageGrid& img, const Tensor& coeffs, const BasisIndexSet& basis,
                          const RotationGroup& group) {
    Var out = lift_conv(Var::leaf(img.I), Var::leaf(coeffs), basis, group.t);
    return GroupFeatureMap{out.value(), group.t, img.h};
}

GroupFeatureMap group_conv(const GroupFeatureMap& F, const Tensor& coeffs,
                           const BasisIndexSet& basis, const RotationGroup& group) {
    if (F.t != group.t)
        throw std::invalid_argument("group_conv: feature group order " + std::to_string(F.t) +
                                    " != group order " + std::to_string(group.t));
    Var out = group_conv(Var::leaf(F.F), Var::leaf(coeffs), basis, group.t);
    return GroupFeatureMap{out.value(), group.t, F.h};
}

ImageGrid project(const GroupFeatureMap& F) {
    Var out = project(Var::leaf(F.F), F.t);
    return ImageGrid{out.value(), F.h};
}

}  // namespace eqd
