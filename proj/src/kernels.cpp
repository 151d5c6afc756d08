#include "eqdenoise/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace eqd::kernels {

bool& use_parallel() {
#ifdef _OPENMP
    static bool flag = true;
#else
    static bool flag = false;
#endif
    return flag;
}

int conv2d_out_size(int n, int p, int stride, int pad) {
    return (n + 2 * pad - p) / stride + 1;
}

namespace {

// One output element, fixed accumulation order (ci, ky, kx).
inline double conv_cell(const Tensor& in, const Tensor& ker, int stride, int pad, int co, int oy,
                        int ox) {
    const int cin = in.shape[0], h = in.shape[1], w = in.shape[2];
    const int ph = ker.shape[2], pw = ker.shape[3];
    double acc = 0.0;
    for (int ci = 0; ci < cin; ++ci) {
        for (int ky = 0; ky < ph; ++ky) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < pw; ++kx) {
                const int ix = ox * stride - pad + kx;
                if (ix < 0 || ix >= w) continue;
                acc += in.at3(ci, iy, ix) * ker.at4(co, ci, ky, kx);
            }
        }
    }
    return acc;
}

// Accumulate gradient into one input-channel slice (fixed order over co, oy, ox).
inline void backward_input_slice(const Tensor& gout, const Tensor& ker, int stride, int pad,
                                 int ci, Tensor& gin) {
    const int cout = gout.shape[0], oh = gout.shape[1], ow = gout.shape[2];
    const int ph = ker.shape[2], pw = ker.shape[3];
    const int h = gin.shape[1], w = gin.shape[2];
    for (int co = 0; co < cout; ++co) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const double g = gout.at3(co, oy, ox);
                if (g == 0.0) continue;
                for (int ky = 0; ky < ph; ++ky) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < pw; ++kx) {
                        const int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= w) continue;
                        gin.at3(ci, iy, ix) += g * ker.at4(co, ci, ky, kx);
                    }
                }
            }
        }
    }
}

// Accumulate gradient into one output-channel block of the kernel gradient.
inline void backward_kernel_slice(const Tensor& gout, const Tensor& in, int stride, int pad,
                                  int co, Tensor& gker) {
    const int oh = gout.shape[1], ow = gout.shape[2];
    const int cin = in.shape[0], h = in.shape[1], w = in.shape[2];
    const int ph = gker.shape[2], pw = gker.shape[3];
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const double g = gout.at3(co, oy, ox);
            if (g == 0.0) continue;
            for (int ci = 0; ci < cin; ++ci) {
                for (int ky = 0; ky < ph; ++ky) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < pw; ++kx) {
                        const int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= w) continue;
                        gker.at4(co, ci, ky, kx) += g * in.at3(ci, iy, ix);
                    }
                }
            }
        }
    }
}

}  // namespace

void conv2d_forward_serial(const Tensor& in, const Tensor& ker, int stride, int pad, Tensor& out) {
    const int cout = ker.shape[0];
    const int oh = out.shape[1], ow = out.shape[2];
    for (int co = 0; co < cout; ++co)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                out.at3(co, oy, ox) = conv_cell(in, ker, stride, pad, co, oy, ox);
}

void conv2d_forward_omp(const Tensor& in, const Tensor& ker, int stride, int pad, Tensor& out) {
    const int cout = ker.shape[0];
    const int oh = out.shape[1], ow = out.shape[2];
#pragma omp parallel for collapse(2) schedule(static)
    for (int co = 0; co < cout; ++co)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                out.at3(co, oy, ox) = conv_cell(in, ker, stride, pad, co, oy, ox);
}

void conv2d_forward(const Tensor& in, const Tensor& ker, int stride, int pad, Tensor& out) {
    if (use_parallel())
        conv2d_forward_omp(in, ker, stride, pad, out);
    else
        conv2d_forward_serial(in, ker, stride, pad, out);
}

void conv2d_backward_input_serial(const Tensor& gout, const Tensor& ker, int stride, int pad,
                                  Tensor& gin) {
    const int cin = gin.shape[0];
    for (int ci = 0; ci < cin; ++ci) backward_input_slice(gout, ker, stride, pad, ci, gin);
}

void conv2d_backward_input_omp(const Tensor& gout, const Tensor& ker, int stride, int pad,
                               Tensor& gin) {
    const int cin = gin.shape[0];
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < cin; ++ci) backward_input_slice(gout, ker, stride, pad, ci, gin);
}

void conv2d_backward_input(const Tensor& gout, const Tensor& ker, int stride, int pad,
                           Tensor& gin) {
    if (use_parallel())
        conv2d_backward_input_omp(gout, ker, stride, pad, gin);
    else
        conv2d_backward_input_serial(gout, ker, stride, pad, gin);
}

void conv2d_backward_kernel_serial(const Tensor& gout, const Tensor& in, int stride, int pad,
                                   Tensor& gker) {
    const int cout = gker.shape[0];
    for (int co = 0; co < cout; ++co) backward_kernel_slice(gout, in, stride, pad, co, gker);
}

void conv2d_backward_kernel_omp(const Tensor& gout, const Tensor& in, int stride, int pad,
                                Tensor& gker) {
    const int cout = gker.shape[0];
#pragma omp parallel for schedule(static)
    for (int co = 0; co < cout; ++co) backward_kernel_slice(gout, in, stride, pad, co, gker);
}

void conv2d_backward_kernel(const Tensor& gout, const Tensor& in, int stride, int pad,
                            Tensor& gker) {
    if (use_parallel())
        conv2d_backward_kernel_omp(gout, in, stride, pad, gker);
    else
        conv2d_backward_kernel_serial(gout, in, stride, pad, gker);
}

}  // namespace eqd::kernels
