#pragma once

#include "eqdenoise/tensor.hpp"

namespace eqd {

// Elementwise binary ops accept equal shapes, or a 1-element tensor on either
// side which broadcasts as a scalar.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);

Var relu(const Var& a);
Var sigmoid(const Var& a);

// Cross-correlation with zero padding. input [C_in,H,W], kernel [C_out,C_in,p,p].
Var conv2d(const Var& input, const Var& kernel, int stride = 1, int pad = 0);

Var sum(const Var& a);
Var mse_loss(const Var& a, const Var& b);
Var l2_norm(const Var& a);

Var concat_channels(const Var& a, const Var& b);

// Orientation-aware concat for group feature maps [t*C1,H,W] + [t*C2,H,W] ->
// [t*(C1+C2),H,W]: each orientation block keeps a's channels before b's, so
// the result stays orientation-major. t = 1 reduces to concat_channels.
Var concat_features(const Var& a, const Var& b, int t);

// x [R*C,H,W], bias [C]; channel j receives bias[j % C]. R = orientation
// repeat factor (1 for plain images), keeping the bias orientation-shared.
Var add_channel_bias(const Var& x, const Var& bias);

}  // namespace eqd
