#include <cstdio>
#include <unordered_set>

#include "eqdenoise/kernels.hpp"
#include "eqdenoise/ops.hpp"
#include "eqdenoise/tensor.hpp"

namespace eqd {

namespace detail {

Var make_op(const char* name, Tensor value, const std::vector<Var>& inputs,
            std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = name;
    bool needs = false;
    for (const Var& v : inputs)
        if (v.defined() && v.requires_grad()) needs = true;
    n->requires_grad = needs;
    if (needs) {
        for (const Var& v : inputs) n->parents.push_back(v.node());
        n->backward_fn = std::move(backward_fn);
    }
    return Var(std::move(n));
}

}  // namespace detail

void Var::backward(const Tensor& seed) const {
    Node* root = n_.get();
    if (!root->backward_fn) {
        std::fprintf(stderr, "eqdenoise: backward() on a graph with no recorded nodes; no-op\n");
        return;
    }
    if (seed.shape != root->value.shape)
        throw std::invalid_argument("backward: seed shape " + shape_str(seed.shape) +
                                    " != output shape " + shape_str(root->value.shape));

    // Iterative DFS postorder: every node's inputs precede it in `order`.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->accumulate(seed);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && node->grad_ready) node->backward_fn(*node);
    }
}

namespace {

bool is_scalar(const Tensor& t) { return t.size() == 1; }

void check_broadcast(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b) && !is_scalar(a) && !is_scalar(b))
        throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                                    shape_str(a.shape) + " vs " + shape_str(b.shape));
}

// Reduce gradient `g` onto a parent of shape `target` (sum when scalar).
void accum_maybe_reduced(Node* parent, const Tensor& g) {
    if (!parent->requires_grad) return;
    if (parent->value.size() == g.size()) {
        parent->accumulate(g);
    } else {
        double s = 0.0;
        for (double v : g.data) s += v;
        Tensor r(parent->value.shape);
        r[0] = s;
        parent->accumulate(r);
    }
}

}  // namespace

Var add(const Var& a, const Var& b) {
    check_broadcast("add", a.value(), b.value());
    const Tensor &av = a.value(), &bv = b.value();
    Tensor out(av.size() >= bv.size() ? av.shape : bv.shape);
    for (long long i = 0; i < out.size(); ++i)
        out[i] = av[is_scalar(av) ? 0 : i] + bv[is_scalar(bv) ? 0 : i];
    return detail::make_op("add", std::move(out), {a, b}, [](Node& n) {
        accum_maybe_reduced(n.parents[0].get(), n.grad);
        accum_maybe_reduced(n.parents[1].get(), n.grad);
    });
}

Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

Var mul(const Var& a, const Var& b) {
    check_broadcast("mul", a.value(), b.value());
    const Tensor &av = a.value(), &bv = b.value();
    Tensor out(av.size() >= bv.size() ? av.shape : bv.shape);
    for (long long i = 0; i < out.size(); ++i)
        out[i] = av[is_scalar(av) ? 0 : i] * bv[is_scalar(bv) ? 0 : i];
    return detail::make_op("mul", std::move(out), {a, b}, [](Node& n) {
        Node* pa = n.parents[0].get();
        Node* pb = n.parents[1].get();
        const Tensor &av = pa->value, &bv = pb->value;
        if (pa->requires_grad) {
            Tensor g(n.grad.shape);
            for (long long i = 0; i < g.size(); ++i)
                g[i] = n.grad[i] * bv[bv.size() == 1 ? 0 : i];
            accum_maybe_reduced(pa, g);
        }
        if (pb->requires_grad) {
            Tensor g(n.grad.shape);
            for (long long i = 0; i < g.size(); ++i)
                g[i] = n.grad[i] * av[av.size() == 1 ? 0 : i];
            accum_maybe_reduced(pb, g);
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a.value();
    for (double& v : out.data) v *= s;
    return detail::make_op("scale", std::move(out), {a}, [s](Node& n) {
        Tensor g = n.grad;
        for (double& v : g.data) v *= s;
        n.parents[0]->accumulate(g);
    });
}

Var relu(const Var& a) {
    Tensor out = a.value();
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return detail::make_op("relu", std::move(out), {a}, [](Node& n) {
        Node* p = n.parents[0].get();
        Tensor g(n.grad.shape);
        for (long long i = 0; i < g.size(); ++i) g[i] = p->value[i] > 0.0 ? n.grad[i] : 0.0;
        p->accumulate(g);
    });
}

Var sigmoid(const Var& a) {
    Tensor out = a.value();
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return detail::make_op("sigmoid", std::move(out), {a}, [](Node& n) {
        Tensor g(n.grad.shape);
        for (long long i = 0; i < g.size(); ++i) {
            const double y = n.value[i];
            g[i] = n.grad[i] * y * (1.0 - y);
        }
        n.parents[0]->accumulate(g);
    });
}

Var conv2d(const Var& input, const Var& kernel, int stride, int pad) {
    const Tensor& in = input.value();
    const Tensor& ker = kernel.value();
    if (in.rank() != 3)
        throw std::invalid_argument("conv2d: input must be [C,H,W], got " + shape_str(in.shape));
    if (ker.rank() != 4)
        throw std::invalid_argument("conv2d: kernel must be [Cout,Cin,p,p], got " +
                                    shape_str(ker.shape));
    if (ker.shape[1] != in.shape[0])
        throw std::invalid_argument("conv2d: kernel C_in=" + std::to_string(ker.shape[1]) +
                                    " does not match input channels=" +
                                    std::to_string(in.shape[0]));
    if (ker.shape[2] % 2 == 0 || ker.shape[2] != ker.shape[3])
        throw std::invalid_argument("conv2d: kernel spatial dims must be odd and square, got " +
                                    shape_str(ker.shape));
    if (stride != 1 && stride != 2) throw std::invalid_argument("conv2d: stride must be 1 or 2");
    if (pad < 0) throw std::invalid_argument("conv2d: padding must be >= 0");

    const int oh = kernels::conv2d_out_size(in.shape[1], ker.shape[2], stride, pad);
    const int ow = kernels::conv2d_out_size(in.shape[2], ker.shape[3], stride, pad);
    if (oh <= 0 || ow <= 0)
        throw std::invalid_argument("conv2d: empty output for input " + shape_str(in.shape));
    Tensor out(Shape{ker.shape[0], oh, ow});
    kernels::conv2d_forward(in, ker, stride, pad, out);
    return detail::make_op("conv2d", std::move(out), {input, kernel}, [stride, pad](Node& n) {
        Node* pin = n.parents[0].get();
        Node* pker = n.parents[1].get();
        if (pin->requires_grad) {
            Tensor gin(pin->value.shape);
            kernels::conv2d_backward_input(n.grad, pker->value, stride, pad, gin);
            pin->accumulate(gin);
        }
        if (pker->requires_grad) {
            Tensor gker(pker->value.shape);
            kernels::conv2d_backward_kernel(n.grad, pin->value, stride, pad, gker);
            pker->accumulate(gker);
        }
    });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data) s += v;
    return detail::make_op("sum", Tensor::scalar(s), {a}, [](Node& n) {
        Tensor g(n.parents[0]->value.shape, n.grad[0]);
        n.parents[0]->accumulate(g);
    });
}

Var mse_loss(const Var& a, const Var& b) {
    const Tensor &av = a.value(), &bv = b.value();
    if (!av.same_shape(bv))
        throw std::invalid_argument("mse_loss: shape mismatch " + shape_str(av.shape) + " vs " +
                                    shape_str(bv.shape));
    double s = 0.0;
    for (long long i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        s += d * d;
    }
    const double n_elem = static_cast<double>(av.size());
    return detail::make_op("mse_loss", Tensor::scalar(s / n_elem), {a, b}, [n_elem](Node& n) {
        Node* pa = n.parents[0].get();
        Node* pb = n.parents[1].get();
        const double c = 2.0 * n.grad[0] / n_elem;
        Tensor g(pa->value.shape);
        for (long long i = 0; i < g.size(); ++i) g[i] = c * (pa->value[i] - pb->value[i]);
        if (pa->requires_grad) pa->accumulate(g);
        if (pb->requires_grad) {
            for (double& v : g.data) v = -v;
            pb->accumulate(g);
        }
    });
}

Var l2_norm(const Var& a) {
    const double norm = a.value().l2();
    return detail::make_op("l2_norm", Tensor::scalar(norm), {a}, [norm](Node& n) {
        Node* p = n.parents[0].get();
        Tensor g(p->value.shape);
        if (norm > 0.0) {
            const double c = n.grad[0] / norm;
            for (long long i = 0; i < g.size(); ++i) g[i] = c * p->value[i];
        }
        p->accumulate(g);
    });
}

Var concat_channels(const Var& a, const Var& b) {
    const Tensor &av = a.value(), &bv = b.value();
    if (av.rank() != 3 || bv.rank() != 3 || av.shape[1] != bv.shape[1] ||
        av.shape[2] != bv.shape[2])
        throw std::invalid_argument("concat_channels: spatial shapes differ, " +
                                    shape_str(av.shape) + " vs " + shape_str(bv.shape));
    Tensor out(Shape{av.shape[0] + bv.shape[0], av.shape[1], av.shape[2]});
    std::copy(av.data.begin(), av.data.end(), out.data.begin());
    std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + av.data.size());
    return detail::make_op("concat_channels", std::move(out), {a, b}, [](Node& n) {
        Node* pa = n.parents[0].get();
        Node* pb = n.parents[1].get();
        const size_t na = pa->value.data.size();
        if (pa->requires_grad) {
            Tensor g(pa->value.shape);
            std::copy(n.grad.data.begin(), n.grad.data.begin() + na, g.data.begin());
            pa->accumulate(g);
        }
        if (pb->requires_grad) {
            Tensor g(pb->value.shape);
            std::copy(n.grad.data.begin() + na, n.grad.data.end(), g.data.begin());
            pb->accumulate(g);
        }
    });
}

Var concat_features(const Var& a, const Var& b, int t) {
    const Tensor &av = a.value(), &bv = b.value();
    if (av.rank() != 3 || bv.rank() != 3 || av.shape[1] != bv.shape[1] ||
        av.shape[2] != bv.shape[2])
        throw std::invalid_argument("concat_features: spatial shapes differ, " +
                                    shape_str(av.shape) + " vs " + shape_str(bv.shape));
    if (av.shape[0] % t != 0 || bv.shape[0] % t != 0)
        throw std::invalid_argument("concat_features: channels not a multiple of group order " +
                                    std::to_string(t));
    const int c1 = av.shape[0] / t, c2 = bv.shape[0] / t;
    const long long plane = static_cast<long long>(av.shape[1]) * av.shape[2];
    Tensor out(Shape{t * (c1 + c2), av.shape[1], av.shape[2]});
    for (int k = 0; k < t; ++k) {
        std::copy(av.data.begin() + k * c1 * plane, av.data.begin() + (k + 1) * c1 * plane,
                  out.data.begin() + (static_cast<long long>(k) * (c1 + c2)) * plane);
        std::copy(bv.data.begin() + k * c2 * plane, bv.data.begin() + (k + 1) * c2 * plane,
                  out.data.begin() + (static_cast<long long>(k) * (c1 + c2) + c1) * plane);
    }
    return detail::make_op("concat_features", std::move(out), {a, b},
                           [t, c1, c2, plane](Node& n) {
                               Node* pa = n.parents[0].get();
                               Node* pb = n.parents[1].get();
                               if (pa->requires_grad) {
                                   Tensor g(pa->value.shape);
                                   for (int k = 0; k < t; ++k)
                                       std::copy(n.grad.data.begin() +
                                                     (static_cast<long long>(k) * (c1 + c2)) * plane,
                                                 n.grad.data.begin() +
                                                     (static_cast<long long>(k) * (c1 + c2) + c1) *
                                                         plane,
                                                 g.data.begin() + k * c1 * plane);
                                   pa->accumulate(g);
                               }
                               if (pb->requires_grad) {
                                   Tensor g(pb->value.shape);
                                   for (int k = 0; k < t; ++k)
                                       std::copy(
                                           n.grad.data.begin() +
                                               (static_cast<long long>(k) * (c1 + c2) + c1) * plane,
                                           n.grad.data.begin() +
                                               (static_cast<long long>(k + 1) * (c1 + c2)) * plane,
                                           g.data.begin() + k * c2 * plane);
                                   pb->accumulate(g);
                               }
                           });
}

Var add_channel_bias(const Var& x, const Var& bias) {
    const Tensor& xv = x.value();
    const Tensor& bv = bias.value();
    if (xv.rank() != 3 || bv.rank() != 1 || xv.shape[0] % bv.shape[0] != 0)
        throw std::invalid_argument("add_channel_bias: channels " + shape_str(xv.shape) +
                                    " not a multiple of bias " + shape_str(bv.shape));
    const int c_base = bv.shape[0];
    const long long plane = static_cast<long long>(xv.shape[1]) * xv.shape[2];
    Tensor out = xv;
    for (int j = 0; j < xv.shape[0]; ++j) {
        const double bval = bv[j % c_base];
        for (long long i = 0; i < plane; ++i) out[j * plane + i] += bval;
    }
    return detail::make_op("add_channel_bias", std::move(out), {x, bias}, [](Node& n) {
        Node* px = n.parents[0].get();
        Node* pb = n.parents[1].get();
        if (px->requires_grad) px->accumulate(n.grad);
        if (pb->requires_grad) {
            const int c_base = pb->value.shape[0];
            const long long plane =
                static_cast<long long>(px->value.shape[1]) * px->value.shape[2];
            Tensor g(pb->value.shape);
            for (int j = 0; j < px->value.shape[0]; ++j)
                for (long long i = 0; i < plane; ++i) g[j % c_base] += n.grad[j * plane + i];
            pb->accumulate(g);
        }
    });
}

}  // namespace eqd
