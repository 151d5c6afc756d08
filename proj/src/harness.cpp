#include "eqdenoise/harness.hpp"

#include "eqdenoise/resample.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

namespace eqd {

namespace {

// Quintic smoothstep window: C^2, w = 1 for r <= r0, 0 for r >= r1,
// |w'| <= 1.875 / (r1 - r0).
double window_value(double r, double r0, double r1) {
    if (r <= r0) return 1.0;
    if (r >= r1) return 0.0;
    const double u = (r - r0) / (r1 - r0);
    return 1.0 - u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

}  // namespace

double SmoothTestFunction::eval(double x1, double x2, int k) const {
    const double w = window_value(std::hypot(x1, x2), window_r0, window_r1);
    if (w == 0.0) return 0.0;
    double v = 0.0;
    for (size_t m = 0; m < modes.size(); ++m) {
        const FieldMode& md = modes[m];
        v += md.amp * std::cos(md.w1 * x1 + md.w2 * x2 + md.phase + orient_phase[k][m]);
    }
    return w * v;
}

SmoothTestFunction SmoothTestFunction::random(int t, int n_modes, double omega_max, Rng& rng) {
    SmoothTestFunction f;
    f.t = t;
    f.orient_phase.assign(t, std::vector<double>(n_modes, 0.0));
    double g = 0.0, amp_sum = 0.0;
    for (int m = 0; m < n_modes; ++m) {
        FieldMode md;
        md.amp = rng.uniform(0.3, 1.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        const double w = rng.uniform(0.2, 1.0) * omega_max;
        const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
        md.w1 = w * std::cos(dir);
        md.w2 = w * std::sin(dir);
        md.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        f.modes.push_back(md);
        g += std::fabs(md.amp) * w;
        amp_sum += std::fabs(md.amp);
        for (int k = 0; k < t; ++k) f.orient_phase[k][m] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    // |grad(w f)| <= w_max |grad f| + |w'|_max |f|
    f.gradient_bound = g + 1.875 / (f.window_r1 - f.window_r0) * amp_sum;
    return f;
}

namespace {
inline double grid_coord(int i, int n, double h) { return (i - (n - 1) / 2.0) * h; }
}  // namespace

GroupFeatureMap sample_field(const SmoothTestFunction& f, int n, int t) {
    if (n < 2) throw std::invalid_argument("sample_field: n must be >= 2");
    const double h = kDomainLength / n;
    Tensor F(Shape{t, n, n});
    for (int k = 0; k < t; ++k)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                F.at3(k, i, j) = f.eval(grid_coord(i, n, h), grid_coord(j, n, h), k);
    return GroupFeatureMap{std::move(F), t, h};
}

GroupFeatureMap sample_field_rotated(const SmoothTestFunction& f, int n, int t, int shift) {
    const double h = kDomainLength / n;
    const double theta = 2.0 * std::numbers::pi * shift / t;
    const double c = std::cos(theta), s = std::sin(theta);
    Tensor F(Shape{t, n, n});
    for (int k = 0; k < t; ++k) {
        const int src = ((k - shift) % t + t) % t;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double x1 = grid_coord(i, n, h), x2 = grid_coord(j, n, h);
                const double u1 = c * x1 - s * x2;
                const double u2 = s * x1 + c * x2;
                F.at3(k, i, j) = f.eval(u1, u2, src);
            }
    }
    return GroupFeatureMap{std::move(F), t, h};
}

ImageGrid sample_image(const SmoothTestFunction& f, int n) {
    GroupFeatureMap F = sample_field(f, n, 1);
    return ImageGrid{std::move(F.F), F.h};
}

bool interior_point(int i, int j, int n, int margin_cells) {
    const double c = (n - 1) / 2.0;
    const double r = std::hypot(i - c, j - c);
    return r <= n / 2.0 - margin_cells;
}

namespace {

double masked_norm(const Tensor& a, const Tensor& b, int margin, Norm norm) {
    if (!a.same_shape(b))
        throw std::invalid_argument("equivariance_error: branch shapes differ, " +
                                    shape_str(a.shape) + " vs " + shape_str(b.shape));
    const int c = a.shape[0], n = a.shape[1];
    double maxabs = 0.0, sq = 0.0;
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (!interior_point(i, j, n, margin)) continue;
                const double d = a.at3(ch, i, j) - b.at3(ch, i, j);
                maxabs = std::max(maxabs, std::fabs(d));
                sq += d * d;
            }
    return norm == Norm::MaxAbs ? maxabs : std::sqrt(sq);
}

}  // namespace

double equivariance_error(const MapOp& op, const GroupFeatureMap& F, double theta, Norm norm,
                          int margin) {
    GroupFeatureMap lhs = op(rotate_feature(F, theta));
    GroupFeatureMap rhs = rotate_feature(op(F), theta);
    return masked_norm(lhs.F, rhs.F, margin, norm);
}

double equivariance_error_exact(const MapOp& op, const SmoothTestFunction& f, int n, int t,
                                int shift, Norm norm, int margin) {
    const double theta = 2.0 * std::numbers::pi * shift / t;
    GroupFeatureMap lhs = op(sample_field_rotated(f, n, t, shift));
    GroupFeatureMap rhs = rotate_feature(op(sample_field(f, n, t)), theta);
    return masked_norm(lhs.F, rhs.F, margin, norm);
}

void fit_loglog(EquivarianceReport& report) {
    std::vector<double> xs, ys;
    for (const SweepPoint& p : report.points)
        if (!p.exact) {
            xs.push_back(std::log(p.h));
            ys.push_back(std::log(p.error));
        }
    if (xs.size() < 2) {
        report.all_exact = xs.empty();
        return;
    }
    double mx = 0, my = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= xs.size();
    my /= ys.size();
    double sxx = 0, sxy = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    report.slope = sxy / sxx;
    report.intercept = my - report.slope * mx;
}

void fit_rate_model(EquivarianceReport& report) {
    // 2-variable non-negative LS by active set: unconstrained solve, then
    // drop a negative coefficient and refit the other.
    double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
    for (const SweepPoint& p : report.points) {
        const double h = p.h, h2 = p.h * p.h;
        a11 += h * h;
        a12 += h * h2;
        a22 += h2 * h2;
        b1 += h * p.error;
        b2 += h2 * p.error;
    }
    const double det = a11 * a22 - a12 * a12;
    double r1 = 0, r2 = 0;
    if (std::fabs(det) > 1e-300) {
        r1 = (b1 * a22 - b2 * a12) / det;
        r2 = (a11 * b2 - a12 * b1) / det;
    }
    if (r1 < 0 || r2 < 0) {
        const double only_r1 = a11 > 0 ? std::max(0.0, b1 / a11) : 0.0;
        const double only_r2 = a22 > 0 ? std::max(0.0, b2 / a22) : 0.0;
        auto resid = [&](double c1, double c2) {
            double s = 0;
            for (const SweepPoint& p : report.points) {
                const double e = c1 * p.h + c2 * p.h * p.h - p.error;
                s += e * e;
            }
            return s;
        };
        if (resid(only_r1, 0.0) <= resid(0.0, only_r2)) {
            r1 = only_r1;
            r2 = 0.0;
        } else {
            r1 = 0.0;
            r2 = only_r2;
        }
    }
    report.fitted_r1 = r1;
    report.fitted_r2 = r2;
}

EquivarianceReport mesh_sweep(const MapOp& op, const std::string& op_name,
                              const SmoothTestFunction& f, const std::vector<int>& resolutions,
                              int shift, int t, double bound_per_h, Norm norm,
                              double margin_phys) {
    if (resolutions.size() < 2)
        throw std::invalid_argument("mesh_sweep: need at least 2 resolutions");
    EquivarianceReport report;
    report.op_name = op_name;
    report.t = t;
    report.theta = 2.0 * std::numbers::pi * shift / t;
    for (int n : resolutions) {
        if (n % 2 != 0) throw std::invalid_argument("mesh_sweep: resolutions must be even");
        SweepPoint pt;
        pt.n = n;
        pt.h = kDomainLength / n;
        const int margin = 2 + static_cast<int>(std::ceil(margin_phys / pt.h));
        pt.error = equivariance_error_exact(op, f, n, t, shift, norm, margin);
        pt.bound = bound_per_h * pt.h;
        pt.exact = pt.error < 1e-13;
        if (pt.bound > 0.0 && pt.error > pt.bound) report.bound_violated = true;
        report.points.push_back(pt);
    }
    report.all_exact = true;
    for (const SweepPoint& p : report.points)
        if (!p.exact) report.all_exact = false;
    fit_loglog(report);
    fit_rate_model(report);
    return report;
}

namespace {

GroupFeatureMap relu_map(GroupFeatureMap F) {
    for (double& v : F.F.data) v = v > 0.0 ? v : 0.0;
    return F;
}

GroupFeatureMap concat_map(const GroupFeatureMap& a, const GroupFeatureMap& b) {
    const int t = a.t, c1 = a.channels(), c2 = b.channels(), n = a.n();
    const long long plane = static_cast<long long>(n) * n;
    Tensor out(Shape{t * (c1 + c2), n, n});
    for (int k = 0; k < t; ++k) {
        std::copy(a.F.data.begin() + k * c1 * plane, a.F.data.begin() + (k + 1) * c1 * plane,
                  out.data.begin() + static_cast<long long>(k) * (c1 + c2) * plane);
        std::copy(b.F.data.begin() + k * c2 * plane, b.F.data.begin() + (k + 1) * c2 * plane,
                  out.data.begin() + (static_cast<long long>(k) * (c1 + c2) + c1) * plane);
    }
    return GroupFeatureMap{std::move(out), t, a.h};
}

}  // namespace

QuadUNet QuadUNet::random(int t, int p, double filter_h, int base, uint64_t seed) {
    QuadUNet net;
    net.basis = aliasing_mask(p);
    net.filter_h = filter_h;
    net.t = t;
    net.w0 = base;
    net.w1 = 2 * base;
    const int nb = net.basis.count();
    Rng rng = Rng::stream(seed, "quad_unet");
    const int pp = p * p;
    // Normalize each layer to unit max L1 gain at a reference mesh, so the
    // quadrature weights do not shrink activations layer after layer (ReLU is
    // positively homogeneous, so the rescaling changes only the scale).
    const double mesh_ref = filter_h / 2.0;
    auto normalize = [&](Tensor& coeffs, bool lift_layer) {
        Tensor ker = lift_layer ? quad_lift_kernel(coeffs, net.basis, filter_h, t, mesh_ref)
                                : quad_group_kernel(coeffs, net.basis, filter_h, t, mesh_ref);
        const long long row = ker.size() / ker.shape[0];
        double gain = 0.0;
        for (int co = 0; co < ker.shape[0]; ++co) {
            double g = 0.0;
            for (long long i = 0; i < row; ++i) g += std::fabs(ker[co * row + i]);
            gain = std::max(gain, g);
        }
        if (gain > 0.0)
            for (double& v : coeffs.data) v /= gain;
    };
    net.lift = random_coeffs({net.w0, 1, nb}, net.basis, pp, rng);
    net.db1 = random_coeffs({net.w1, net.w0, t, nb}, net.basis, net.w0 * t * pp, rng);
    net.db2 = random_coeffs({net.w1, net.w1, t, nb}, net.basis, net.w1 * t * pp, rng);
    net.mid = random_coeffs({net.w1, net.w1, t, nb}, net.basis, net.w1 * t * pp, rng);
    net.ub2 = random_coeffs({net.w1, 2 * net.w1, t, nb}, net.basis, 2 * net.w1 * t * pp, rng);
    net.ub1 = random_coeffs({net.w0, 2 * net.w1, t, nb}, net.basis, 2 * net.w1 * t * pp, rng);
    net.out = random_coeffs({1, net.w0, t, nb}, net.basis, net.w0 * t * pp, rng);
    normalize(net.lift, true);
    normalize(net.db1, false);
    normalize(net.db2, false);
    normalize(net.mid, false);
    normalize(net.ub2, false);
    normalize(net.ub1, false);
    normalize(net.out, false);
    return net;
}

Tensor QuadUNet::apply(const Tensor& image) const {
    if (image.rank() != 3 || image.shape[0] != 1 || image.shape[1] != image.shape[2] ||
        image.shape[1] % 4 != 0)
        throw std::invalid_argument("QuadUNet: expected [1,n,n] with n divisible by 4, got " +
                                    shape_str(image.shape));
    const int n = image.shape[1];
    RotationGroup group(t);
    ImageGrid img{image, kDomainLength / n};
    GroupFeatureMap F = relu_map(quad_lift_conv(img, lift, basis, filter_h, group));
    F = relu_map(quad_group_conv(F, db1, basis, filter_h, group));
    GroupFeatureMap skip1 = F;
    F = maxpool_down(F);
    F = relu_map(quad_group_conv(F, db2, basis, filter_h, group));
    GroupFeatureMap skip2 = F;
    F = maxpool_down(F);
    F = relu_map(quad_group_conv(F, mid, basis, filter_h, group));
    F = upsample_bilinear(F);
    F = relu_map(quad_group_conv(concat_map(F, skip2), ub2, basis, filter_h, group));
    F = upsample_bilinear(F);
    F = relu_map(quad_group_conv(concat_map(F, skip1), ub1, basis, filter_h, group));
    F = quad_group_conv(F, out, basis, filter_h, group);
    return project(F).I;
}

NetworkError network_equivariance_error(const NetFn& net, const Tensor& image,
                                        const Tensor& image_rot, double theta, int margin) {
    Tensor lhs = net(image_rot);
    Tensor rhs = rotate_planes(net(image), theta);
    const int c = rhs.shape[0], n = rhs.shape[1];
    NetworkError err;
    double sq = 0.0, ref_sq = 0.0;
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (!interior_point(i, j, n, margin)) continue;
                const double d = lhs.at3(ch, i, j) - rhs.at3(ch, i, j);
                err.abs_max = std::max(err.abs_max, std::fabs(d));
                sq += d * d;
                ref_sq += rhs.at3(ch, i, j) * rhs.at3(ch, i, j);
            }
    err.rel = ref_sq > 0.0 ? sq / ref_sq : std::numeric_limits<double>::quiet_NaN();
    return err;
}

double relative_network_error(const NetFn& net, const Tensor& image, double theta, int margin) {
    return network_equivariance_error(net, image, rotate_planes(image, theta), theta, margin).rel;
}

std::vector<AngleSweepEntry> angle_sweep(
    const std::function<NetFn(int t, uint64_t seed)>& net_factory,
    const std::vector<Tensor>& inputs, const std::vector<double>& angles,
    const std::vector<int>& t_values, const std::vector<uint64_t>& seeds, int margin) {
    std::vector<AngleSweepEntry> out;
    for (int t : t_values) {
        for (double theta : angles) {
            AngleSweepEntry e;
            e.t = t;
            e.theta = theta;
            e.n = inputs.empty() ? 0 : inputs.front().shape[1];
            double acc = 0.0;
            int count = 0;
            for (uint64_t seed : seeds) {
                NetFn net = net_factory(t, seed);
                for (const Tensor& img : inputs) {
                    const double r = relative_network_error(net, img, theta, margin);
                    if (std::isfinite(r)) {
                        acc += r;
                        ++count;
                    }
                }
            }
            e.error = count ? acc / count : std::numeric_limits<double>::quiet_NaN();
            out.push_back(e);
        }
    }
    return out;
}

void write_reports_csv(const std::vector<EquivarianceReport>& reports, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open report file " + path);
    os << "operator,theta,t,n,h,error,bound\n";
    for (const EquivarianceReport& r : reports)
        for (const SweepPoint& p : r.points)
            os << r.op_name << ',' << r.theta << ',' << r.t << ',' << p.n << ',' << p.h << ','
               << p.error << ',' << p.bound << '\n';
}

}  // namespace eqd
