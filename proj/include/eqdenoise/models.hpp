#pragma once

#include <memory>

#include "eqdenoise/group_ops.hpp"
#include "eqdenoise/ops.hpp"
#include "eqdenoise/resample.hpp"
#include "eqdenoise/rng.hpp"

namespace eqd {

enum class DownKind { MaxPool, Stride };
enum class UpKind { Nearest, Bilinear };
enum class ArchKind { Vanilla, Equivariant, AdaReNet };

struct UNetSpec {
    int depth = 2;          // number of DB/UB pairs
    int base_channels = 6;  // level widths: base at the top, 2*base below
    int filter_size = 3;    // p, odd
    int t = 8;              // group order (equivariant variant)
    int in_channels = 1;
    DownKind down = DownKind::MaxPool;
    UpKind up = UpKind::Nearest;

    int width(int level) const { return level == 0 ? base_channels : 2 * base_channels; }
    void validate() const;
};

struct NamedParam {
    std::string name;
    Var var;
};

class Model {
public:
    virtual ~Model() = default;
    virtual Var forward(const Var& image) = 0;

    std::vector<NamedParam>& params() { return params_; }
    const std::vector<NamedParam>& params() const { return params_; }
    long long param_count() const;
    void zero_grads();

    // No-grad evaluation of a raw image tensor.
    Tensor operator()(const Tensor& image);

protected:
    Var add_param(std::string name, Tensor init);
    std::vector<NamedParam> params_;
};

// Standard U-Net: plain p x p convolutions, the same resampling operators and
// skip concatenations as the equivariant variant.
class VanillaUNet : public Model {
public:
    VanillaUNet(const UNetSpec& spec, Rng& rng);
    Var forward(const Var& image) override;
    const UNetSpec& spec() const { return spec_; }

private:
    UNetSpec spec_;
    std::vector<Var> kernels_, biases_;  // in forward order
};

// Rotation-equivariant U-Net: lifting E-Conv, group E-Conv blocks with the
// chosen down/upsampling pair, orientation projection at the output.
class EquivariantUNet : public Model {
public:
    EquivariantUNet(const UNetSpec& spec, Rng& rng);
    Var forward(const Var& image) override;
    const UNetSpec& spec() const { return spec_; }
    const BasisIndexSet& basis() const { return basis_; }

private:
    UNetSpec spec_;
    BasisIndexSet basis_;
    Var lift_coeffs_, lift_bias_;
    std::vector<Var> coeffs_, biases_;  // group convs in forward order
};

// Fusion mask: 4 standard 3x3 conv layers, ReLU between, sigmoid output.
class MaskNet : public Model {
public:
    MaskNet(int channels, int hidden, Rng& rng);
    Var forward(const Var& image) override;

private:
    std::vector<Var> kernels_, biases_;
};

// Two plain residual blocks (conv-ReLU-conv + identity) between channel adapters.
class SelfCorrect : public Model {
public:
    SelfCorrect(int channels, int hidden, Rng& rng);
    Var forward(const Var& image) override;

private:
    std::vector<Var> kernels_, biases_;
};

struct AdaReNetOutput {
    Var vanilla_out, eq_out, mask, fused, corrected;
};

class AdaReNet : public Model {
public:
    // Branch widths: equivariant branch uses spec as given; the vanilla
    // branch width is chosen so the two branches have comparable parameter
    // counts.
    AdaReNet(const UNetSpec& spec, Rng& rng);

    AdaReNetOutput forward_all(const Var& image, const Var* mask_override = nullptr);
    Var forward(const Var& image) override;

    VanillaUNet& vanilla() { return *vanilla_; }
    EquivariantUNet& equivariant() { return *eq_; }

private:
    std::unique_ptr<VanillaUNet> vanilla_;
    std::unique_ptr<EquivariantUNet> eq_;
    std::unique_ptr<MaskNet> mask_;
    std::unique_ptr<SelfCorrect> correct_;
};

// Vanilla width with roughly the same parameter count as an equivariant
// U-Net of width eq_base (per-layer coefficient counts matched).
int matched_vanilla_width(int eq_base, int t, int filter_size);

// || corrected - target ||_2 + a1 || f_c - target ||_2 + a2 || f_e - target ||_2
Var adarenet_loss(const Var& corrected, const Var& vanilla_out, const Var& eq_out,
                  const Var& target, double alpha1, double alpha2);

std::unique_ptr<Model> build_model(ArchKind kind, const UNetSpec& spec, Rng& rng);

}  // namespace eqd
