#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace eqd {

using Shape = std::vector<int>;

inline long long numel(const Shape& s) {
    long long n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Dense row-major tensor of doubles.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0)
        : shape(std::move(s)), data(static_cast<size_t>(numel(shape)), fill) {}

    static Tensor scalar(double v) {
        Tensor t(Shape{1});
        t.data[0] = v;
        return t;
    }

    long long size() const { return static_cast<long long>(data.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& operator[](long long i) { return data[static_cast<size_t>(i)]; }
    double operator[](long long i) const { return data[static_cast<size_t>(i)]; }

    // [C,H,W] indexing
    double& at3(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    double at3(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    // [A,B,H,W] indexing
    double& at4(int a, int b, int y, int x) {
        return data[((static_cast<size_t>(a) * shape[1] + b) * shape[2] + y) * shape[3] + x];
    }
    double at4(int a, int b, int y, int x) const {
        return data[((static_cast<size_t>(a) * shape[1] + b) * shape[2] + y) * shape[3] + x];
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data) m = std::max(m, std::fabs(v));
        return m;
    }
    double l2() const {
        double s = 0.0;
        for (double v : data) s += v * v;
        return std::sqrt(s);
    }
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One recorded operation (or leaf) in the computation graph. Inputs always
// precede their consumers, so a depth-first postorder from the output node
// gives a valid topological order for the backward pass.
struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily, same shape as value
    bool requires_grad = false;
    bool grad_ready = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;  // reads own grad, accumulates into parents'
    const char* op = "leaf";

    void ensure_grad() {
        if (!grad_ready) {
            grad = Tensor(value.shape);
            grad_ready = true;
        }
    }
    void accumulate(const Tensor& g) {
        ensure_grad();
        for (long long i = 0; i < g.size(); ++i) grad[i] += g[i];
    }
};

// Handle to a graph node with value semantics (shared ownership).
class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : n_(std::move(n)) {}

    static Var leaf(Tensor v, bool requires_grad = false) {
        auto n = std::make_shared<Node>();
        n->value = std::move(v);
        n->requires_grad = requires_grad;
        return Var(std::move(n));
    }

    bool defined() const { return static_cast<bool>(n_); }
    const Tensor& value() const { return n_->value; }
    Tensor& value() { return n_->value; }
    bool requires_grad() const { return n_->requires_grad; }
    const Tensor& grad() const { return n_->grad; }
    bool has_grad() const { return n_->grad_ready; }
    void zero_grad() {
        if (n_->grad_ready)
            for (double& g : n_->grad.data) g = 0.0;
    }

    // Reverse-mode sweep from this node. Default seed is all-ones.
    void backward() const {
        Tensor seed(n_->value.shape, 1.0);
        backward(seed);
    }
    void backward(const Tensor& seed) const;

    NodePtr node() const { return n_; }

private:
    NodePtr n_;
};

namespace detail {
Var make_op(const char* name, Tensor value, const std::vector<Var>& inputs,
            std::function<void(Node&)> backward_fn);
}

}  // namespace eqd
