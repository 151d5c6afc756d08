#pragma once

#include "eqdenoise/tensor.hpp"

namespace eqd::kernels {

// Global switch between the OpenMP kernels and the serial reference.
// Both produce bit-identical results: each output element is accumulated
// in a fixed serial order, parallelism is only across independent elements.
bool& use_parallel();

// Cross-correlation, zero padding.
//   out[co,oy,ox] = sum_{ci,ky,kx} in[ci, oy*stride-pad+ky, ox*stride-pad+kx] * ker[co,ci,ky,kx]
void conv2d_forward_serial(const Tensor& in, const Tensor& ker, int stride, int pad, Tensor& out);
void conv2d_forward_omp(const Tensor& in, const Tensor& ker, int stride, int pad, Tensor& out);
void conv2d_forward(const Tensor& in, const Tensor& ker, int stride, int pad, Tensor& out);

void conv2d_backward_input_serial(const Tensor& gout, const Tensor& ker, int stride, int pad,
                                  Tensor& gin);
void conv2d_backward_input_omp(const Tensor& gout, const Tensor& ker, int stride, int pad,
                               Tensor& gin);
void conv2d_backward_input(const Tensor& gout, const Tensor& ker, int stride, int pad, Tensor& gin);

void conv2d_backward_kernel_serial(const Tensor& gout, const Tensor& in, int stride, int pad,
                                   Tensor& gker);
void conv2d_backward_kernel_omp(const Tensor& gout, const Tensor& in, int stride, int pad,
                                Tensor& gker);
void conv2d_backward_kernel(const Tensor& gout, const Tensor& in, int stride, int pad,
                            Tensor& gker);

int conv2d_out_size(int n, int p, int stride, int pad);

}  // namespace eqd::kernels
