#pragma once

#include "eqdenoise/group_ops.hpp"
#include "eqdenoise/tensor.hpp"

namespace eqd {

// The stride operator keeps one fixed representative per 2x2 window,
// F_{i,j+1}; this offset pair is the single source of truth for that
// choice.
inline constexpr int kStrideRepRow = 0;
inline constexpr int kStrideRepCol = 1;

// All four operators act channelwise on [C,n,n] and are differentiable.
// Downsampling halves the resolution (n must be even), upsampling doubles it.
Var maxpool_down(const Var& x);       // 2x2 window max; grad to the argmax (row-major ties)
Var stride_down(const Var& x);        // fixed window representative
Var upsample_nearest(const Var& x);   // 2x2 block replication
Var upsample_bilinear(const Var& x);  // cell-centered tensor-product weights, edge clamped

// Mesh-size bookkeeping wrappers: downsampling doubles h, upsampling halves it.
GroupFeatureMap maxpool_down(const GroupFeatureMap& F);
GroupFeatureMap stride_down(const GroupFeatureMap& F);
GroupFeatureMap upsample_nearest(const GroupFeatureMap& F);
GroupFeatureMap upsample_bilinear(const GroupFeatureMap& F);

}  // namespace eqd
