#include "eqdenoise/models.hpp"

#include <cmath>

namespace eqd {

void UNetSpec::validate() const {
    if (depth < 1) throw std::invalid_argument("UNetSpec: depth must be >= 1");
    if (base_channels < 1) throw std::invalid_argument("UNetSpec: channels must be > 0");
    if (filter_size < 3 || filter_size % 2 == 0)
        throw std::invalid_argument("UNetSpec: filter size must be odd and >= 3");
    if (t < 1) throw std::invalid_argument("UNetSpec: group order must be >= 1");
    if (in_channels < 1) throw std::invalid_argument("UNetSpec: in_channels must be >= 1");
}

long long Model::param_count() const {
    long long n = 0;
    for (const NamedParam& p : params_) n += p.var.value().size();
    return n;
}

void Model::zero_grads() {
    for (NamedParam& p : params_) p.var.zero_grad();
}

Tensor Model::operator()(const Tensor& image) { return forward(Var::leaf(image)).value(); }

Var Model::add_param(std::string name, Tensor init) {
    Var v = Var::leaf(std::move(init), true);
    params_.push_back({std::move(name), v});
    return v;
}

namespace {

Tensor normal_tensor(const Shape& shape, double sd, Rng& rng) {
    Tensor t(shape);
    for (double& v : t.data) v = sd * rng.normal();
    return t;
}

void check_divisible(const Tensor& img, int depth) {
    const int n = img.shape[1];
    if (n % (1 << depth) != 0 || img.shape[2] % (1 << depth) != 0)
        throw std::invalid_argument("U-Net: input resolution " + std::to_string(n) +
                                    " not divisible by 2^" + std::to_string(depth));
}

Var apply_down(const Var& x, DownKind kind) {
    return kind == DownKind::MaxPool ? maxpool_down(x) : stride_down(x);
}

Var apply_up(const Var& x, UpKind kind) {
    return kind == UpKind::Nearest ? upsample_nearest(x) : upsample_bilinear(x);
}

}  // namespace

// ---- VanillaUNet -----------------------------------------------------------

VanillaUNet::VanillaUNet(const UNetSpec& spec, Rng& rng) : spec_(spec) {
    spec_.validate();
    const int p = spec_.filter_size;
    auto conv = [&](const std::string& name, int cin, int cout) {
        const double sd = std::sqrt(1.0 / (cin * p * p));
        kernels_.push_back(add_param(name + ".kernel", normal_tensor({cout, cin, p, p}, sd, rng)));
        biases_.push_back(add_param(name + ".bias", Tensor(Shape{cout})));
    };
    conv("in", spec_.in_channels, spec_.width(0));
    for (int i = 1; i <= spec_.depth; ++i)
        conv("db" + std::to_string(i), spec_.width(i - 1), spec_.width(i));
    conv("mid", spec_.width(spec_.depth), spec_.width(spec_.depth));
    for (int i = spec_.depth; i >= 1; --i) {
        const std::string ub = "ub" + std::to_string(i);
        conv(ub + ".conv1", spec_.width(i) * 2, spec_.width(i - 1));
        conv(ub + ".conv2", spec_.width(i - 1), spec_.width(i - 1));
    }
    conv("out", spec_.width(0), spec_.in_channels);
}

Var VanillaUNet::forward(const Var& image) {
    check_divisible(image.value(), spec_.depth);
    const int pad = (spec_.filter_size - 1) / 2;
    size_t li = 0;
    auto conv = [&](const Var& x) {
        Var y = add_channel_bias(conv2d(x, kernels_[li], 1, pad), biases_[li]);
        ++li;
        return y;
    };
    Var cur = relu(conv(image));
    std::vector<Var> skips;
    for (int i = 1; i <= spec_.depth; ++i) {
        cur = relu(conv(cur));
        skips.push_back(cur);  // pre-downsample features feed the matching UB
        cur = apply_down(cur, spec_.down);
    }
    cur = relu(conv(cur));
    for (int i = spec_.depth; i >= 1; --i) {
        cur = apply_up(cur, spec_.up);
        cur = concat_channels(cur, skips[static_cast<size_t>(i) - 1]);
        cur = relu(conv(cur));
        cur = relu(conv(cur));
    }
    return conv(cur);
}

// ---- EquivariantUNet -------------------------------------------------------

EquivariantUNet::EquivariantUNet(const UNetSpec& spec, Rng& rng)
    : spec_(spec), basis_(aliasing_mask(spec.filter_size)) {
    spec_.validate();
    const int p = spec_.filter_size, t = spec_.t, nb = basis_.count();
    lift_coeffs_ = add_param(
        "lift.coeffs",
        random_coeffs({spec_.width(0), spec_.in_channels, nb}, basis_, spec_.in_channels * p * p,
                      rng));
    lift_bias_ = add_param("lift.bias", Tensor(Shape{spec_.width(0)}));
    auto conv = [&](const std::string& name, int cin, int cout) {
        coeffs_.push_back(add_param(name + ".coeffs",
                                    random_coeffs({cout, cin, t, nb}, basis_, cin * t * p * p,
                                                  rng)));
        biases_.push_back(add_param(name + ".bias", Tensor(Shape{cout})));
    };
    for (int i = 1; i <= spec_.depth; ++i)
        conv("db" + std::to_string(i), spec_.width(i - 1), spec_.width(i));
    conv("mid", spec_.width(spec_.depth), spec_.width(spec_.depth));
    for (int i = spec_.depth; i >= 1; --i) {
        const std::string ub = "ub" + std::to_string(i);
        conv(ub + ".conv1", spec_.width(i) * 2, spec_.width(i - 1));
        conv(ub + ".conv2", spec_.width(i - 1), spec_.width(i - 1));
    }
    conv("out", spec_.width(0), spec_.in_channels);
}

Var EquivariantUNet::forward(const Var& image) {
    check_divisible(image.value(), spec_.depth);
    const int t = spec_.t;
    size_t li = 0;
    auto conv = [&](const Var& x) {
        Var y = add_channel_bias(group_conv(x, coeffs_[li], basis_, t), biases_[li]);
        ++li;
        return y;
    };
    Var cur = relu(add_channel_bias(lift_conv(image, lift_coeffs_, basis_, t), lift_bias_));
    std::vector<Var> skips;
    for (int i = 1; i <= spec_.depth; ++i) {
        cur = relu(conv(cur));
        skips.push_back(cur);
        cur = apply_down(cur, spec_.down);
    }
    cur = relu(conv(cur));
    for (int i = spec_.depth; i >= 1; --i) {
        cur = apply_up(cur, spec_.up);
        cur = concat_features(cur, skips[static_cast<size_t>(i) - 1], t);
        cur = relu(conv(cur));
        cur = relu(conv(cur));
    }
    return project(conv(cur), t);
}

// ---- MaskNet ---------------------------------------------------------------

MaskNet::MaskNet(int channels, int hidden, Rng& rng) {
    auto conv = [&](const std::string& name, int cin, int cout) {
        const double sd = std::sqrt(1.0 / (cin * 9));
        kernels_.push_back(add_param(name + ".kernel", normal_tensor({cout, cin, 3, 3}, sd, rng)));
        biases_.push_back(add_param(name + ".bias", Tensor(Shape{cout})));
    };
    conv("mask.conv1", channels, hidden);
    conv("mask.conv2", hidden, hidden);
    conv("mask.conv3", hidden, hidden);
    conv("mask.conv4", hidden, channels);
}

Var MaskNet::forward(const Var& image) {
    Var cur = image;
    for (size_t i = 0; i < kernels_.size(); ++i) {
        cur = add_channel_bias(conv2d(cur, kernels_[i], 1, 1), biases_[i]);
        cur = (i + 1 == kernels_.size()) ? sigmoid(cur) : relu(cur);
    }
    return cur;
}

// ---- SelfCorrect -----------------------------------------------------------

SelfCorrect::SelfCorrect(int channels, int hidden, Rng& rng) {
    auto conv = [&](const std::string& name, int cin, int cout) {
        const double sd = std::sqrt(1.0 / (cin * 9));
        kernels_.push_back(add_param(name + ".kernel", normal_tensor({cout, cin, 3, 3}, sd, rng)));
        biases_.push_back(add_param(name + ".bias", Tensor(Shape{cout})));
    };
    conv("sc.in", channels, hidden);
    conv("sc.block1.conv1", hidden, hidden);
    conv("sc.block1.conv2", hidden, hidden);
    conv("sc.block2.conv1", hidden, hidden);
    conv("sc.block2.conv2", hidden, hidden);
    conv("sc.out", hidden, channels);
}

Var SelfCorrect::forward(const Var& image) {
    size_t li = 0;
    auto conv = [&](const Var& x) {
        Var y = add_channel_bias(conv2d(x, kernels_[li], 1, 1), biases_[li]);
        ++li;
        return y;
    };
    Var cur = relu(conv(image));
    for (int b = 0; b < 2; ++b) {
        Var res = conv(relu(conv(cur)));
        cur = relu(add(cur, res));
    }
    return conv(cur);
}

// ---- AdaReNet --------------------------------------------------------------

int matched_vanilla_width(int eq_base, int t, int filter_size) {
    const int nb = aliasing_mask(filter_size).count();
    const double factor =
        std::sqrt(static_cast<double>(t) * nb / (filter_size * filter_size));
    return std::max(1, static_cast<int>(std::lround(eq_base * factor)));
}

AdaReNet::AdaReNet(const UNetSpec& spec, Rng& rng) {
    UNetSpec vspec = spec;
    vspec.base_channels = matched_vanilla_width(spec.base_channels, spec.t, spec.filter_size);
    vanilla_ = std::make_unique<VanillaUNet>(vspec, rng);
    eq_ = std::make_unique<EquivariantUNet>(spec, rng);
    mask_ = std::make_unique<MaskNet>(spec.in_channels, 32, rng);
    correct_ = std::make_unique<SelfCorrect>(spec.in_channels, 32, rng);
    auto adopt = [&](Model& m, const std::string& prefix) {
        for (NamedParam& p : m.params()) params_.push_back({prefix + p.name, p.var});
    };
    adopt(*vanilla_, "vm.");
    adopt(*eq_, "eq.");
    adopt(*mask_, "");
    adopt(*correct_, "");
}

AdaReNetOutput AdaReNet::forward_all(const Var& image, const Var* mask_override) {
    AdaReNetOutput out;
    out.vanilla_out = vanilla_->forward(image);
    out.eq_out = eq_->forward(image);
    out.mask = mask_override ? *mask_override : mask_->forward(image);
    if (!out.mask.value().same_shape(out.vanilla_out.value()))
        throw std::invalid_argument("AdaReNet: mask shape " +
                                    shape_str(out.mask.value().shape) +
                                    " != branch output shape " +
                                    shape_str(out.vanilla_out.value().shape));
    // I_hat = M .* f_c + (1 - M) .* f_e
    Var one = Var::leaf(Tensor::scalar(1.0));
    out.fused = add(mul(out.mask, out.vanilla_out), mul(sub(one, out.mask), out.eq_out));
    out.corrected = correct_->forward(out.fused);
    return out;
}

Var AdaReNet::forward(const Var& image) { return forward_all(image).corrected; }

Var adarenet_loss(const Var& corrected, const Var& vanilla_out, const Var& eq_out,
                  const Var& target, double alpha1, double alpha2) {
    if (alpha1 < 0 || alpha2 < 0)
        throw std::invalid_argument("adarenet_loss: loss weights must be non-negative");
    Var main = l2_norm(sub(corrected, target));
    Var reg1 = scale(l2_norm(sub(vanilla_out, target)), alpha1);
    Var reg2 = scale(l2_norm(sub(eq_out, target)), alpha2);
    return add(add(main, reg1), reg2);
}

std::unique_ptr<Model> build_model(ArchKind kind, const UNetSpec& spec, Rng& rng) {
    switch (kind) {
        case ArchKind::Vanilla: return std::make_unique<VanillaUNet>(spec, rng);
        case ArchKind::Equivariant: return std::make_unique<EquivariantUNet>(spec, rng);
        case ArchKind::AdaReNet: return std::make_unique<AdaReNet>(spec, rng);
    }
    throw std::invalid_argument("build_model: unknown architecture");
}

}  // namespace eqd
