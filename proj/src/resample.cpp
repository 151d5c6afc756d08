#include "eqdenoise/resample.hpp"

#include "eqdenoise/ops.hpp"

namespace eqd {

namespace {

void check_down(const char* op, const Tensor& x) {
    if (x.rank() != 3 || x.shape[1] != x.shape[2])
        throw std::invalid_argument(std::string(op) + ": expected [C,n,n], got " +
                                    shape_str(x.shape));
    if (x.shape[1] % 2 != 0)
        throw std::invalid_argument(std::string(op) + ": resolution " +
                                    std::to_string(x.shape[1]) +
                                    " is odd, 2x2 window partition undefined");
}

void check_up(const char* op, const Tensor& x) {
    if (x.rank() != 3 || x.shape[1] != x.shape[2])
        throw std::invalid_argument(std::string(op) + ": expected [C,n,n], got " +
                                    shape_str(x.shape));
}

}  // namespace

Var maxpool_down(const Var& x) {
    check_down("maxpool_down", x.value());
    const Tensor& in = x.value();
    const int c = in.shape[0], n = in.shape[1], m = n / 2;
    Tensor out(Shape{c, m, m});
    auto arg = std::make_shared<std::vector<int>>(static_cast<size_t>(c) * m * m * 2);
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                double best = in.at3(ch, 2 * i, 2 * j);
                int bi = 2 * i, bj = 2 * j;
                for (int di = 0; di <= 1; ++di)
                    for (int dj = 0; dj <= 1; ++dj) {
                        const double v = in.at3(ch, 2 * i + di, 2 * j + dj);
                        if (v > best) {  // ties keep the first index in row-major order
                            best = v;
                            bi = 2 * i + di;
                            bj = 2 * j + dj;
                        }
                    }
                out.at3(ch, i, j) = best;
                const size_t o = (static_cast<size_t>(ch) * m * m + i * m + j) * 2;
                (*arg)[o] = bi;
                (*arg)[o + 1] = bj;
            }
    return detail::make_op("maxpool_down", std::move(out), {x}, [arg, c, m](Node& nd) {
        Node* p = nd.parents[0].get();
        Tensor g(p->value.shape);
        for (int ch = 0; ch < c; ++ch)
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < m; ++j) {
                    const size_t o = (static_cast<size_t>(ch) * m * m + i * m + j) * 2;
                    g.at3(ch, (*arg)[o], (*arg)[o + 1]) += nd.grad.at3(ch, i, j);
                }
        p->accumulate(g);
    });
}

Var stride_down(const Var& x) {
    check_down("stride_down", x.value());
    const Tensor& in = x.value();
    const int c = in.shape[0], n = in.shape[1], m = n / 2;
    Tensor out(Shape{c, m, m});
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                out.at3(ch, i, j) = in.at3(ch, 2 * i + kStrideRepRow, 2 * j + kStrideRepCol);
    return detail::make_op("stride_down", std::move(out), {x}, [c, m](Node& nd) {
        Node* p = nd.parents[0].get();
        Tensor g(p->value.shape);
        for (int ch = 0; ch < c; ++ch)
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < m; ++j)
                    g.at3(ch, 2 * i + kStrideRepRow, 2 * j + kStrideRepCol) +=
                        nd.grad.at3(ch, i, j);
        p->accumulate(g);
    });
}

Var upsample_nearest(const Var& x) {
    check_up("upsample_nearest", x.value());
    const Tensor& in = x.value();
    const int c = in.shape[0], n = in.shape[1], m = 2 * n;
    Tensor out(Shape{c, m, m});
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) out.at3(ch, i, j) = in.at3(ch, i / 2, j / 2);
    return detail::make_op("upsample_nearest", std::move(out), {x}, [c, m](Node& nd) {
        Node* p = nd.parents[0].get();
        Tensor g(p->value.shape);
        for (int ch = 0; ch < c; ++ch)
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < m; ++j) g.at3(ch, i / 2, j / 2) += nd.grad.at3(ch, i, j);
        p->accumulate(g);
    });
}

namespace {

// Fine cell I maps to coarse index coordinate (I+0.5)/2 - 0.5 on the
// cell-centered grids; edge cells clamp to the boundary value.
inline void bilinear_coords(int fine, int n_coarse, int& i0, int& i1, double& w1) {
    const double u = (fine + 0.5) / 2.0 - 0.5;
    const double fl = std::floor(u);
    i0 = static_cast<int>(fl);
    w1 = u - fl;
    i1 = i0 + 1;
    if (i0 < 0) i0 = 0;
    if (i1 > n_coarse - 1) i1 = n_coarse - 1;
}

}  // namespace

Var upsample_bilinear(const Var& x) {
    check_up("upsample_bilinear", x.value());
    const Tensor& in = x.value();
    const int c = in.shape[0], n = in.shape[1], m = 2 * n;
    Tensor out(Shape{c, m, m});
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < m; ++i) {
            int i0, i1;
            double wi;
            bilinear_coords(i, n, i0, i1, wi);
            for (int j = 0; j < m; ++j) {
                int j0, j1;
                double wj;
                bilinear_coords(j, n, j0, j1, wj);
                out.at3(ch, i, j) = (1 - wi) * (1 - wj) * in.at3(ch, i0, j0) +
                                    (1 - wi) * wj * in.at3(ch, i0, j1) +
                                    wi * (1 - wj) * in.at3(ch, i1, j0) +
                                    wi * wj * in.at3(ch, i1, j1);
            }
        }
    return detail::make_op("upsample_bilinear", std::move(out), {x}, [c, n, m](Node& nd) {
        Node* p = nd.parents[0].get();
        Tensor g(p->value.shape);
        for (int ch = 0; ch < c; ++ch)
            for (int i = 0; i < m; ++i) {
                int i0, i1;
                double wi;
                bilinear_coords(i, n, i0, i1, wi);
                for (int j = 0; j < m; ++j) {
                    int j0, j1;
                    double wj;
                    bilinear_coords(j, n, j0, j1, wj);
                    const double gv = nd.grad.at3(ch, i, j);
                    g.at3(ch, i0, j0) += (1 - wi) * (1 - wj) * gv;
                    g.at3(ch, i0, j1) += (1 - wi) * wj * gv;
                    g.at3(ch, i1, j0) += wi * (1 - wj) * gv;
                    g.at3(ch, i1, j1) += wi * wj * gv;
                }
            }
        p->accumulate(g);
    });
}

namespace {
GroupFeatureMap wrap(const GroupFeatureMap& F, Var (*op)(const Var&), double h_factor) {
    Var out = op(Var::leaf(F.F));
    return GroupFeatureMap{out.value(), F.t, F.h * h_factor};
}
}  // namespace

GroupFeatureMap maxpool_down(const GroupFeatureMap& F) { return wrap(F, &maxpool_down, 2.0); }
GroupFeatureMap stride_down(const GroupFeatureMap& F) { return wrap(F, &stride_down, 2.0); }
GroupFeatureMap upsample_nearest(const GroupFeatureMap& F) {
    return wrap(F, &upsample_nearest, 0.5);
}
GroupFeatureMap upsample_bilinear(const GroupFeatureMap& F) {
    return wrap(F, &upsample_bilinear, 0.5);
}

}  // namespace eqd
