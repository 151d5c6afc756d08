#pragma once

#include <map>
#include <optional>

#include "eqdenoise/models.hpp"
#include "eqdenoise/rng.hpp"

namespace eqd {

enum class NoiseKind { Gaussian, Poisson, PoissonGaussian, SaltPepper, Speckle };

NoiseKind noise_kind_from_string(const std::string& s);
std::string to_string(NoiseKind k);

struct NoiseModel {
    NoiseKind kind = NoiseKind::Gaussian;
    double sigma = 25.0;  // gaussian std on the [0,255] scale
    // Per-example sigma randomization (blind setting); active when max >= 0.
    double sigma_min = 0.0;
    double sigma_max = -1.0;
    double poisson_scale = 30.0;  // peak photon count at value 255
    double density = 0.1;         // salt & pepper fraction
    double variance = 0.1;        // speckle multiplicative variance
};

// Values stay unclipped; clipping happens only at image export.
Tensor corrupt(const Tensor& clean, const NoiseModel& model, Rng& rng);

// Two independent corruptions of the same clean image.
std::pair<Tensor, Tensor> n2n_pair(const Tensor& clean, const NoiseModel& model, Rng& rng);

struct N2VBatch {
    Tensor masked_input;               // noisy image with masked pixels replaced
    Tensor target;                     // the original noisy image
    Tensor mask;                       // 1 at masked positions, 0 elsewhere
    std::vector<std::pair<int, int>> positions;
};

// Stratified blind-spot masking: `count` positions, each replaced by a
// uniformly drawn different pixel of its (2*window+1)^2 neighborhood.
N2VBatch n2v_mask_batch(const Tensor& noisy, int count, int window, Rng& rng);

// input = noisy + alpha*sigma*z, target = noisy - sigma*z/alpha: the two
// added noises have exactly canceling cross-covariance.
std::pair<Tensor, Tensor> r2r_pair(const Tensor& noisy, double sigma, double alpha, Rng& rng);

// Mean squared error restricted to mask==1 positions; the N2V training loss.
// Gradients are identically zero at unmasked positions.
Var masked_mse(const Var& pred, const Tensor& target, const Tensor& mask);

double psnr(const Tensor& a, const Tensor& b, double peak = 255.0);
// Mean local SSIM, 11x11 Gaussian window (std 1.5), stabilizers (0.01*peak)^2
// and (0.03*peak)^2.
double ssim(const Tensor& a, const Tensor& b, double peak = 255.0);

enum class Method { N2N, N2V, R2R };
Method method_from_string(const std::string& s);
std::string to_string(Method m);

struct TrainConfig {
    Method method = Method::N2N;
    ArchKind arch = ArchKind::Equivariant;
    UNetSpec net;
    NoiseModel noise;
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999;
    int batch_size = 4;
    int patch = 64;
    int epochs = 5;
    int steps_per_epoch = 50;
    uint64_t seed = 1;
    std::string dataset_dir;
    bool rgb = false;
    int val_count = 4;  // images held out for validation
    double alpha1 = 0.1, alpha2 = 0.1;
    int n2v_count = 64, n2v_window = 2;
    double r2r_alpha = 0.5;
    int r2r_passes = 8;

    void validate() const;
};

struct EpochLog {
    int epoch = 0;
    int steps = 0;
    double mean_loss = 0.0;
    double val_psnr = 0.0, val_ssim = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    std::string checkpoint_path;
    double final_val_psnr = 0.0, final_val_ssim = 0.0;
    double noisy_val_psnr = 0.0;  // PSNR of the raw noisy validation inputs
    double final_loss = 0.0;
    long long total_steps = 0;
};

// Adaptive-moment SGD over model parameters; state is checkpointable so
// resumed runs reproduce the exact trajectory.
class Adam {
public:
    Adam(double lr, double beta1, double beta2, double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
    void step(std::vector<NamedParam>& params);
    void save_state(std::map<std::string, Tensor>& out) const;
    void load_state(const std::map<std::string, Tensor>& in, size_t n_params);

private:
    double lr_, b1_, b2_, eps_;
    long long t_ = 0;
    std::vector<Tensor> m_, v_;
};

// Runs patch-sampled mini-batch training, writes metrics.csv and
// checkpoint.eqdn under out_dir. With resume=true continues from the
// checkpoint already present there.
TrainResult train(const TrainConfig& cfg, const std::string& out_dir, bool resume = false);

// Model + meta checkpoint helpers shared by train and the CLI.
std::map<std::string, Tensor> model_state(const Model& model);
void load_model_state(Model& model, const std::map<std::string, Tensor>& state);
void encode_train_meta(const TrainConfig& cfg, std::map<std::string, Tensor>& out);
TrainConfig decode_train_meta(const std::map<std::string, Tensor>& in);

// Forward through the network, reflect-padding to the required divisibility
// and cropping back. For R2R checkpoints, averages `passes` recorrupted runs.
Tensor denoise_image(Model& model, const Tensor& noisy, int depth);
Tensor denoise_image_r2r(Model& model, const Tensor& noisy, int depth, double sigma, double alpha,
                         int passes, Rng& rng);

}  // namespace eqd
