#pragma once

#include "eqdenoise/steerable.hpp"
#include "eqdenoise/tensor.hpp"

namespace eqd {

// Cyclic rotation subgroup of O(2) with elements theta_k = 2*k*pi/t.
struct RotationGroup {
    int t = 1;
    explicit RotationGroup(int order = 1) : t(order) {
        if (order < 1) throw std::invalid_argument("RotationGroup: order must be >= 1");
    }
    double angle(int k) const { return 2.0 * 3.141592653589793238462643383280 * k / t; }
    // Index of theta within the group, or -1 if not an element (tolerance 1e-9).
    int element_index(double theta) const;
};

// n x n x C image on the cell-centered grid with mesh size h:
// x_ij = ((i-(n+1)/2)h, (j-(n+1)/2)h), 1-based i,j. Tensor layout [C,n,n].
struct ImageGrid {
    Tensor I;
    double h = 1.0;
    int n() const { return I.shape[1]; }
    int channels() const { return I.shape[0]; }
};

// Discretized function on R^2 x S. Tensor layout [t*C,n,n], orientation-major:
// channel index = k*C + c for orientation k and base channel c.
struct GroupFeatureMap {
    Tensor F;
    int t = 1;
    double h = 1.0;
    int n() const { return F.shape[1]; }
    int channels() const { return F.shape[0] / t; }
};

// --- rotations (value level) ----------------------------------------------

// Output pixel at x_ij takes the latent value at A_theta^{-1} x_ij. Exact
// index permutation at multiples of pi/2, bilinear with zero extension
// otherwise. Acts channelwise on [C,n,n].
Tensor rotate_planes(const Tensor& img, double theta);

ImageGrid rotate_image(const ImageGrid& img, double theta);

// Spatial rotation of every orientation slice combined with a cyclic shift of
// the orientation axis: out slice k = rotate(in slice (k-s) mod t, theta_s).
// The shift sign is pinned by the composition law
// rotate_feature(rotate_feature(F,a),b) == rotate_feature(F,(a+b) mod t).
Tensor rotate_feature_planes(const Tensor& F, int t, int shift);

GroupFeatureMap rotate_feature(const GroupFeatureMap& F, double theta);

// --- lifting / group convolution (differentiable) --------------------------

// Kernel assembly: lift coefficients [C_out,C_in,nb] -> [t*C_out,C_in,p,p],
// orientation k sampled at angle theta_k. Linear in the coefficients.
Var lift_kernel(const Var& coeffs, const BasisIndexSet& basis, int t);

// Group-conv kernel: coefficients [C_out,C_in,t,nb] -> [t*C_out,t*C_in,p,p].
// Output orientation k reads input orientation (k+s) mod t through the
// filter with orientation index s, sampled at angle theta_k.
Var group_kernel(const Var& coeffs, const BasisIndexSet& basis, int t);

// image [C_in,n,n] -> group features [t*C_out,n,n]; stride 1, pad (p-1)/2.
Var lift_conv(const Var& image, const Var& coeffs, const BasisIndexSet& basis, int t);

// features [t*C_in,n,n] -> [t*C_out,n,n]; stride 1, pad (p-1)/2.
Var group_conv(const Var& features, const Var& coeffs, const BasisIndexSet& basis, int t);

// Per-pixel mean over the orientation axis: [t*C,n,n] -> [C,n,n].
Var project(const Var& features, int t);

// --- quadrature E-Conv (value level) ----------------------------------------
// The continuous filter is fixed in physical units (basis with its own
// filter_h); tap spacing follows the mesh, tap count grows as h -> 0 and the
// h^2 quadrature weight makes the sum converge to the continuous integral.
// This is the operator whose equivariance error vanishes at O(h^2); the
// fixed-p network convs above keep a constant tap count instead.

Tensor quad_lift_kernel(const Tensor& coeffs, const BasisIndexSet& basis, double filter_h, int t,
                        double mesh_h);
Tensor quad_group_kernel(const Tensor& coeffs, const BasisIndexSet& basis, double filter_h, int t,
                         double mesh_h);

GroupFeatureMap quad_lift_conv(const ImageGrid& img, const Tensor& coeffs,
                               const BasisIndexSet& basis, double filter_h,
                               const RotationGroup& group);
GroupFeatureMap quad_group_conv(const GroupFeatureMap& F, const Tensor& coeffs,
                                const BasisIndexSet& basis, double filter_h,
                                const RotationGroup& group);

// --- value-level wrappers for the harness ----------------------------------

GroupFeatureMap lift_conv(const ImageGrid& img, const Tensor& coeffs, const BasisIndexSet& basis,
                          const RotationGroup& group);
GroupFeatureMap group_conv(const GroupFeatureMap& F, const Tensor& coeffs,
                           const BasisIndexSet& basis, const RotationGroup& group);
ImageGrid project(const GroupFeatureMap& F);

}  // namespace eqd
