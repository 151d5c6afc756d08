#pragma once

#include <functional>
#include <optional>
#include <string>

#include "eqdenoise/group_ops.hpp"
#include "eqdenoise/rng.hpp"

namespace eqd {

// Physical side length of the sampling domain; refinement changes n (and so
// h = L/n) but never the latent function.
inline constexpr double kDomainLength = 2.0;

struct FieldMode {
    double amp, w1, w2, phase;
};

// Band-limited random field on R^2 x S with an analytic gradient bound,
// evaluable exactly at any continuous point. A C^2 radial window takes the
// field smoothly to zero before the domain boundary, so zero extension under
// rotation and padded convolution agrees with the true field.
struct SmoothTestFunction {
    std::vector<FieldMode> modes;
    std::vector<std::vector<double>> orient_phase;  // [t][mode], makes e depend on A
    int t = 1;
    double gradient_bound = 0.0;  // analytic sup bound on |grad|, window included
    double window_r0 = 0.6, window_r1 = 0.85;  // w = 1 inside r0, 0 beyond r1

    double eval(double x1, double x2, int k) const;

    static SmoothTestFunction random(int t, int n_modes, double omega_max, Rng& rng);
};

GroupFeatureMap sample_field(const SmoothTestFunction& f, int n, int t);
// Exact sampling of pi^E_theta[e] for group element theta = 2*pi*shift/t.
GroupFeatureMap sample_field_rotated(const SmoothTestFunction& f, int n, int t, int shift);
ImageGrid sample_image(const SmoothTestFunction& f, int n);

enum class Norm { MaxAbs, L2 };

// Interior predicate: disk of radius n/2 - margin cells around the grid
// center, so every rotation keeps the compared data inside the domain.
bool interior_point(int i, int j, int n, int margin_cells);

using MapOp = std::function<GroupFeatureMap(const GroupFeatureMap&)>;

// || op(rot_theta F) - rot_theta(op F) || over the interior (margin cells at
// the output resolution; 2 covers the rotation stencil). theta must be a
// group element of F.
double equivariance_error(const MapOp& op, const GroupFeatureMap& F, double theta, Norm norm,
                          int margin = 2);

// Same discrepancy, but the rotated input branch is sampled exactly from the
// closed-form rotated field, which keeps input interpolation error out of the
// rate measurements.
double equivariance_error_exact(const MapOp& op, const SmoothTestFunction& f, int n, int t,
                                int shift, Norm norm, int margin = 2);

struct SweepPoint {
    int n = 0;
    double h = 0.0;
    double error = 0.0;
    double bound = 0.0;  // 0 when no theoretical bound applies
    bool exact = false;  // measured error at floating-point zero; excluded from fit
};

struct EquivarianceReport {
    std::string op_name;
    double theta = 0.0;
    int t = 1;
    std::vector<SweepPoint> points;
    bool all_exact = false;
    double slope = 0.0, intercept = 0.0;  // log-log least squares over non-exact points
    double fitted_r1 = 0.0, fitted_r2 = 0.0;  // non-negative LS fit of e = R1*h + R2*h^2
    bool bound_violated = false;
};

// Least squares slope on (log h, log error); pairs with error 0 excluded.
void fit_loglog(EquivarianceReport& report);
// Non-negative least squares for e = R1*h + R2*h^2.
void fit_rate_model(EquivarianceReport& report);

// margin_phys: physical depth of the boundary band excluded from the norm, on
// top of the 2-cell rotation stencil; set it to the operator's physical
// receptive radius when its support can outgrow the windowed field.
EquivarianceReport mesh_sweep(const MapOp& op, const std::string& op_name,
                              const SmoothTestFunction& f, const std::vector<int>& resolutions,
                              int shift, int t, double bound_per_h, Norm norm = Norm::MaxAbs,
                              double margin_phys = 0.0);

// Mesh-refinable 2-level equivariant U-Net built from quadrature E-Convs: one
// set of continuous filters, evaluable at any resolution, so full-network
// equivariance error can be swept in h. Maxpool down, bilinear up.
struct QuadUNet {
    BasisIndexSet basis;
    double filter_h = 0.05;
    int t = 8;
    int w0 = 1, w1 = 2;
    Tensor lift, db1, db2, mid, ub2, ub1, out;

    static QuadUNet random(int t, int p, double filter_h, int base, uint64_t seed);
    Tensor apply(const Tensor& image) const;  // [1,n,n] -> [1,n,n], n divisible by 4
};

// Relative metric ||L_R phi(f) - phi L_R(f)||_2^2 / ||L_R phi(f)||_2^2 over
// the interior; NaN when the denominator vanishes.
using NetFn = std::function<Tensor(const Tensor&)>;

struct NetworkError {
    double abs_max = 0.0;
    double rel = 0.0;  // squared-l2 error over squared-l2 reference norm
};

NetworkError network_equivariance_error(const NetFn& net, const Tensor& image,
                                        const Tensor& image_rot, double theta, int margin = 2);

double relative_network_error(const NetFn& net, const Tensor& image, double theta,
                              int margin = 2);

// Error vs group order at fixed resolution and (generally off-group) angles.
struct AngleSweepEntry {
    double theta = 0.0;
    int t = 0;
    int n = 0;
    double error = 0.0;  // relative squared-l2 error averaged over the inputs
};

std::vector<AngleSweepEntry> angle_sweep(
    const std::function<NetFn(int t, uint64_t seed)>& net_factory,
    const std::vector<Tensor>& inputs, const std::vector<double>& angles,
    const std::vector<int>& t_values, const std::vector<uint64_t>& seeds, int margin = 2);

void write_reports_csv(const std::vector<EquivarianceReport>& reports, const std::string& path);

}  // namespace eqd
