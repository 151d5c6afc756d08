#include "eqdenoise/selfsup.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>

#include "eqdenoise/checkpoint.hpp"
#include "eqdenoise/image_io.hpp"

namespace eqd {

namespace fs = std::filesystem;

NoiseKind noise_kind_from_string(const std::string& s) {
    if (s == "gaussian") return NoiseKind::Gaussian;
    if (s == "poisson") return NoiseKind::Poisson;
    if (s == "poisson_gaussian") return NoiseKind::PoissonGaussian;
    if (s == "salt_pepper") return NoiseKind::SaltPepper;
    if (s == "speckle") return NoiseKind::Speckle;
    throw std::invalid_argument("unknown noise kind: " + s);
}

std::string to_string(NoiseKind k) {
    switch (k) {
        case NoiseKind::Gaussian: return "gaussian";
        case NoiseKind::Poisson: return "poisson";
        case NoiseKind::PoissonGaussian: return "poisson_gaussian";
        case NoiseKind::SaltPepper: return "salt_pepper";
        case NoiseKind::Speckle: return "speckle";
    }
    return "?";
}

Method method_from_string(const std::string& s) {
    if (s == "n2n") return Method::N2N;
    if (s == "n2v") return Method::N2V;
    if (s == "r2r") return Method::R2R;
    throw std::invalid_argument("unknown training method: " + s);
}

std::string to_string(Method m) {
    switch (m) {
        case Method::N2N: return "n2n";
        case Method::N2V: return "n2v";
        case Method::R2R: return "r2r";
    }
    return "?";
}

namespace {

long long sample_poisson(double lambda, Rng& rng) {
    if (lambda <= 0.0) return 0;
    if (lambda > 60.0) {  // normal approximation for large counts
        const double v = lambda + std::sqrt(lambda) * rng.normal();
        return std::max(0LL, static_cast<long long>(std::llround(v)));
    }
    const double limit = std::exp(-lambda);
    long long k = 0;
    double prod = rng.uniform();
    while (prod > limit) {
        ++k;
        prod *= rng.uniform();
    }
    return k;
}

void add_gaussian(Tensor& img, double sigma, Rng& rng) {
    for (double& v : img.data) v += sigma * rng.normal();
}

}  // namespace

Tensor corrupt(const Tensor& clean, const NoiseModel& model, Rng& rng) {
    Tensor out = clean;
    switch (model.kind) {
        case NoiseKind::Gaussian: {
            const double sigma = model.sigma_max >= 0.0
                                     ? rng.uniform(model.sigma_min, model.sigma_max)
                                     : model.sigma;
            add_gaussian(out, sigma, rng);
            break;
        }
        case NoiseKind::Poisson: {
            const double scale = model.poisson_scale;
            for (double& v : out.data)
                v = static_cast<double>(sample_poisson(std::max(0.0, v) * scale / 255.0, rng)) *
                    255.0 / scale;
            break;
        }
        case NoiseKind::PoissonGaussian: {
            const double scale = model.poisson_scale;
            for (double& v : out.data)
                v = static_cast<double>(sample_poisson(std::max(0.0, v) * scale / 255.0, rng)) *
                    255.0 / scale;
            add_gaussian(out, model.sigma, rng);
            break;
        }
        case NoiseKind::SaltPepper: {
            if (model.density < 0.0 || model.density > 1.0)
                throw std::invalid_argument("corrupt: salt_pepper density must be in [0,1]");
            for (double& v : out.data)
                if (rng.uniform() < model.density) v = rng.uniform() < 0.5 ? 0.0 : 255.0;
            break;
        }
        case NoiseKind::Speckle: {
            const double sd = std::sqrt(model.variance);
            for (double& v : out.data) v *= 1.0 + sd * rng.normal();
            break;
        }
    }
    return out;
}

std::pair<Tensor, Tensor> n2n_pair(const Tensor& clean, const NoiseModel& model, Rng& rng) {
    Tensor a = corrupt(clean, model, rng);
    Tensor b = corrupt(clean, model, rng);
    return {std::move(a), std::move(b)};
}

N2VBatch n2v_mask_batch(const Tensor& noisy, int count, int window, Rng& rng) {
    if (count < 1) throw std::invalid_argument("n2v_mask_batch: count must be >= 1");
    if (window < 1) throw std::invalid_argument("n2v_mask_batch: window must be >= 1");
    const int c = noisy.shape[0], h = noisy.shape[1], w = noisy.shape[2];
    if (static_cast<long long>(count) > static_cast<long long>(h) * w)
        throw std::invalid_argument("n2v_mask_batch: count " + std::to_string(count) +
                                    " exceeds pixel count " + std::to_string(h * w));
    N2VBatch batch;
    batch.masked_input = noisy;
    batch.target = noisy;
    batch.mask = Tensor(noisy.shape);

    // Stratified positions: one random pixel per cell of a grid that tiles
    // the image with at least `count` cells.
    int cell = std::max(1, static_cast<int>(std::floor(std::sqrt(
                               static_cast<double>(h) * w / count))));
    while (((h + cell - 1) / cell) * ((w + cell - 1) / cell) < count && cell > 1) --cell;
    const int gh = (h + cell - 1) / cell, gw = (w + cell - 1) / cell;
    std::vector<int> cells(static_cast<size_t>(gh) * gw);
    for (size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<int>(i);
    for (size_t i = cells.size(); i > 1; --i)
        std::swap(cells[i - 1], cells[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);

    for (int m = 0; m < count; ++m) {
        const int cidx = cells[static_cast<size_t>(m)];
        const int cy = cidx / gw, cx = cidx % gw;
        const int y0 = cy * cell, x0 = cx * cell;
        const int y = std::min(h - 1, y0 + rng.uniform_int(0, cell - 1));
        const int x = std::min(w - 1, x0 + rng.uniform_int(0, cell - 1));
        batch.positions.emplace_back(y, x);
        // replacement drawn from the neighborhood, never the pixel itself
        int ry = y, rx = x;
        while (ry == y && rx == x) {
            ry = std::clamp(y + rng.uniform_int(-window, window), 0, h - 1);
            rx = std::clamp(x + rng.uniform_int(-window, window), 0, w - 1);
        }
        for (int ch = 0; ch < c; ++ch) {
            batch.masked_input.at3(ch, y, x) = noisy.at3(ch, ry, rx);
            batch.mask.at3(ch, y, x) = 1.0;
        }
    }
    return batch;
}

std::pair<Tensor, Tensor> r2r_pair(const Tensor& noisy, double sigma, double alpha, Rng& rng) {
    if (sigma <= 0.0) throw std::invalid_argument("r2r_pair: sigma must be > 0");
    if (alpha <= 0.0) throw std::invalid_argument("r2r_pair: alpha must be > 0");
    Tensor input = noisy, target = noisy;
    for (long long i = 0; i < noisy.size(); ++i) {
        const double z = rng.normal();
        input[i] += alpha * sigma * z;
        target[i] -= sigma * z / alpha;
    }
    return {std::move(input), std::move(target)};
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
    if (!a.same_shape(b))
        throw std::invalid_argument("psnr: shape mismatch " + shape_str(a.shape) + " vs " +
                                    shape_str(b.shape));
    double mse = 0.0;
    for (long long i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Tensor& a, const Tensor& b, double peak) {
    if (!a.same_shape(b))
        throw std::invalid_argument("ssim: shape mismatch " + shape_str(a.shape) + " vs " +
                                    shape_str(b.shape));
    constexpr int kWin = 11;
    const int c = a.shape[0], h = a.shape[1], w = a.shape[2];
    if (h < kWin || w < kWin)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    // normalized Gaussian window, std 1.5
    double win[kWin][kWin];
    double wsum = 0.0;
    for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
            const double dy = i - 5, dx = j - 5;
            win[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
            wsum += win[i][j];
        }
    for (auto& row : win)
        for (double& v : row) v /= wsum;

    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    double total = 0.0;
    long long count = 0;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y + kWin <= h; ++y)
            for (int x = 0; x + kWin <= w; ++x) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int i = 0; i < kWin; ++i)
                    for (int j = 0; j < kWin; ++j) {
                        const double va = a.at3(ch, y + i, x + j);
                        const double vb = b.at3(ch, y + i, x + j);
                        const double wv = win[i][j];
                        ma += wv * va;
                        mb += wv * vb;
                        saa += wv * va * va;
                        sbb += wv * vb * vb;
                        sab += wv * va * vb;
                    }
                const double var_a = saa - ma * ma;
                const double var_b = sbb - mb * mb;
                const double cov = sab - ma * mb;
                total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                         ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
                ++count;
            }
    return total / static_cast<double>(count);
}

void TrainConfig::validate() const {
    net.validate();
    if (patch % (1 << net.depth) != 0)
        throw std::invalid_argument("TrainConfig: patch size " + std::to_string(patch) +
                                    " not divisible by 2^" + std::to_string(net.depth));
    if (batch_size < 1 || epochs < 1 || steps_per_epoch < 1)
        throw std::invalid_argument("TrainConfig: batch/epochs/steps must be >= 1");
    if (lr <= 0) throw std::invalid_argument("TrainConfig: step size must be > 0");
    if (alpha1 < 0 || alpha2 < 0)
        throw std::invalid_argument("TrainConfig: loss weights must be non-negative");
}

void Adam::step(std::vector<NamedParam>& params) {
    if (m_.empty()) {
        for (NamedParam& p : params) {
            m_.emplace_back(p.var.value().shape);
            v_.emplace_back(p.var.value().shape);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        Var& p = params[i].var;
        if (!p.has_grad()) continue;
        Tensor& value = p.value();
        const Tensor& g = p.grad();
        for (long long j = 0; j < value.size(); ++j) {
            m_[i][j] = b1_ * m_[i][j] + (1.0 - b1_) * g[j];
            v_[i][j] = b2_ * v_[i][j] + (1.0 - b2_) * g[j] * g[j];
            value[j] -= lr_ * (m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + eps_);
        }
    }
}

void Adam::save_state(std::map<std::string, Tensor>& out) const {
    out["opt/t"] = Tensor::scalar(static_cast<double>(t_));
    for (size_t i = 0; i < m_.size(); ++i) {
        out["opt/m/" + std::to_string(i)] = m_[i];
        out["opt/v/" + std::to_string(i)] = v_[i];
    }
}

void Adam::load_state(const std::map<std::string, Tensor>& in, size_t n_params) {
    auto it = in.find("opt/t");
    if (it == in.end()) return;  // fresh optimizer
    t_ = static_cast<long long>(it->second[0]);
    m_.clear();
    v_.clear();
    for (size_t i = 0; i < n_params; ++i) {
        m_.push_back(in.at("opt/m/" + std::to_string(i)));
        v_.push_back(in.at("opt/v/" + std::to_string(i)));
    }
}

std::map<std::string, Tensor> model_state(const Model& model) {
    std::map<std::string, Tensor> out;
    for (const NamedParam& p : model.params()) out["param/" + p.name] = p.var.value();
    return out;
}

void load_model_state(Model& model, const std::map<std::string, Tensor>& state) {
    for (NamedParam& p : model.params()) {
        auto it = state.find("param/" + p.name);
        if (it == state.end())
            throw std::runtime_error("checkpoint missing tensor: " + p.name);
        if (it->second.shape != p.var.value().shape)
            throw std::runtime_error("checkpoint shape mismatch for tensor " + p.name + ": " +
                                     shape_str(it->second.shape) + " vs expected " +
                                     shape_str(p.var.value().shape));
        p.var.value() = it->second;
    }
}

void encode_train_meta(const TrainConfig& cfg, std::map<std::string, Tensor>& out) {
    auto put = [&](const std::string& k, double v) { out["meta/" + k] = Tensor::scalar(v); };
    put("method", static_cast<double>(cfg.method));
    put("arch", static_cast<double>(cfg.arch));
    put("depth", cfg.net.depth);
    put("base_channels", cfg.net.base_channels);
    put("filter_size", cfg.net.filter_size);
    put("t", cfg.net.t);
    put("in_channels", cfg.net.in_channels);
    put("down", static_cast<double>(cfg.net.down));
    put("up", static_cast<double>(cfg.net.up));
    put("r2r_alpha", cfg.r2r_alpha);
    put("r2r_passes", cfg.r2r_passes);
    put("noise_sigma", cfg.noise.sigma);
}

TrainConfig decode_train_meta(const std::map<std::string, Tensor>& in) {
    auto get = [&](const std::string& k) {
        auto it = in.find("meta/" + k);
        if (it == in.end()) throw std::runtime_error("checkpoint missing meta field: " + k);
        return it->second[0];
    };
    TrainConfig cfg;
    cfg.method = static_cast<Method>(static_cast<int>(get("method")));
    cfg.arch = static_cast<ArchKind>(static_cast<int>(get("arch")));
    cfg.net.depth = static_cast<int>(get("depth"));
    cfg.net.base_channels = static_cast<int>(get("base_channels"));
    cfg.net.filter_size = static_cast<int>(get("filter_size"));
    cfg.net.t = static_cast<int>(get("t"));
    cfg.net.in_channels = static_cast<int>(get("in_channels"));
    cfg.net.down = static_cast<DownKind>(static_cast<int>(get("down")));
    cfg.net.up = static_cast<UpKind>(static_cast<int>(get("up")));
    cfg.r2r_alpha = get("r2r_alpha");
    cfg.r2r_passes = static_cast<int>(get("r2r_passes"));
    cfg.noise.sigma = get("noise_sigma");
    return cfg;
}

namespace {

Tensor reflect_pad_to_multiple(const Tensor& img, int multiple, int& pad_h, int& pad_w) {
    const int c = img.shape[0], h = img.shape[1], w = img.shape[2];
    const int th = (h + multiple - 1) / multiple * multiple;
    const int tw = (w + multiple - 1) / multiple * multiple;
    pad_h = th - h;
    pad_w = tw - w;
    if (pad_h == 0 && pad_w == 0) return img;
    Tensor out(Shape{c, th, tw});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < th; ++y) {
            const int sy = y < h ? y : 2 * h - 1 - y;
            for (int x = 0; x < tw; ++x) {
                const int sx = x < w ? x : 2 * w - 1 - x;
                out.at3(ch, y, x) = img.at3(ch, sy, sx);
            }
        }
    return out;
}

Tensor crop(const Tensor& img, int h, int w) {
    if (img.shape[1] == h && img.shape[2] == w) return img;
    Tensor out(Shape{img.shape[0], h, w});
    for (int ch = 0; ch < img.shape[0]; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at3(ch, y, x) = img.at3(ch, y, x);
    return out;
}

}  // namespace

Tensor denoise_image(Model& model, const Tensor& noisy, int depth) {
    int ph = 0, pw = 0;
    Tensor padded = reflect_pad_to_multiple(noisy, 1 << depth, ph, pw);
    Tensor out = model(padded);
    return crop(out, noisy.shape[1], noisy.shape[2]);
}

Tensor denoise_image_r2r(Model& model, const Tensor& noisy, int depth, double sigma, double alpha,
                         int passes, Rng& rng) {
    Tensor acc(noisy.shape);
    for (int k = 0; k < passes; ++k) {
        Tensor recorrupted = noisy;
        for (double& v : recorrupted.data) v += alpha * sigma * rng.normal();
        Tensor out = denoise_image(model, recorrupted, depth);
        for (long long i = 0; i < acc.size(); ++i) acc[i] += out[i];
    }
    for (double& v : acc.data) v /= passes;
    return acc;
}

namespace {

Tensor random_patch(const Tensor& img, int patch, Rng& rng) {
    const int h = img.shape[1], w = img.shape[2];
    if (h < patch || w < patch)
        throw std::runtime_error("dataset image smaller than patch size " +
                                 std::to_string(patch));
    const int y0 = h == patch ? 0 : rng.uniform_int(0, h - patch);
    const int x0 = w == patch ? 0 : rng.uniform_int(0, w - patch);
    Tensor out(Shape{img.shape[0], patch, patch});
    for (int ch = 0; ch < img.shape[0]; ++ch)
        for (int y = 0; y < patch; ++y)
            for (int x = 0; x < patch; ++x) out.at3(ch, y, x) = img.at3(ch, y0 + y, x0 + x);
    return out;
}

}  // namespace

Var masked_mse(const Var& pred, const Tensor& target, const Tensor& mask) {
    double count = 0.0;
    for (double v : mask.data) count += v;
    Var d = sub(pred, Var::leaf(target));
    Var masked = mul(mul(d, d), Var::leaf(mask));
    return scale(sum(masked), 1.0 / std::max(1.0, count));
}

namespace {

// One training example: loss Var for the configured method/architecture.
Var example_loss(const TrainConfig& cfg, Model& model, const Tensor& clean_patch, Rng& rng) {
    switch (cfg.method) {
        case Method::N2N: {
            auto [input, target] = n2n_pair(clean_patch, cfg.noise, rng);
            if (cfg.arch == ArchKind::AdaReNet) {
                auto& ada = static_cast<AdaReNet&>(model);
                AdaReNetOutput out = ada.forward_all(Var::leaf(input));
                return adarenet_loss(out.corrected, out.vanilla_out, out.eq_out,
                                     Var::leaf(target), cfg.alpha1, cfg.alpha2);
            }
            return mse_loss(model.forward(Var::leaf(input)), Var::leaf(target));
        }
        case Method::N2V: {
            Tensor noisy = corrupt(clean_patch, cfg.noise, rng);
            N2VBatch b = n2v_mask_batch(noisy, cfg.n2v_count, cfg.n2v_window, rng);
            if (cfg.arch == ArchKind::AdaReNet) {
                auto& ada = static_cast<AdaReNet&>(model);
                AdaReNetOutput out = ada.forward_all(Var::leaf(b.masked_input));
                Var main = masked_mse(out.corrected, b.target, b.mask);
                Var r1 = scale(masked_mse(out.vanilla_out, b.target, b.mask), cfg.alpha1);
                Var r2 = scale(masked_mse(out.eq_out, b.target, b.mask), cfg.alpha2);
                return add(add(main, r1), r2);
            }
            return masked_mse(model.forward(Var::leaf(b.masked_input)), b.target, b.mask);
        }
        case Method::R2R: {
            Tensor noisy = corrupt(clean_patch, cfg.noise, rng);
            auto [input, target] = r2r_pair(noisy, cfg.noise.sigma, cfg.r2r_alpha, rng);
            if (cfg.arch == ArchKind::AdaReNet) {
                auto& ada = static_cast<AdaReNet&>(model);
                AdaReNetOutput out = ada.forward_all(Var::leaf(input));
                return adarenet_loss(out.corrected, out.vanilla_out, out.eq_out,
                                     Var::leaf(target), cfg.alpha1, cfg.alpha2);
            }
            return mse_loss(model.forward(Var::leaf(input)), Var::leaf(target));
        }
    }
    throw std::logic_error("unreachable");
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::string& out_dir, bool resume) {
    cfg.validate();
    auto paths = list_images(cfg.dataset_dir);
    if (paths.empty())
        throw std::runtime_error("dataset directory has no images: " + cfg.dataset_dir);

    std::vector<Tensor> images;
    for (const auto& p : paths) {
        Tensor img = load_image(p);
        images.push_back(cfg.rgb ? img : to_gray(img));
    }
    const int val_count = std::min<int>(cfg.val_count, static_cast<int>(images.size()) - 1);
    std::vector<Tensor> train_set(images.begin(), images.end() - val_count);
    std::vector<Tensor> val_set(images.end() - val_count, images.end());

    fs::create_directories(out_dir);
    const std::string ckpt_path = out_dir + "/checkpoint.eqdn";
    const std::string metrics_path = out_dir + "/metrics.csv";

    Rng init_rng = Rng::stream(cfg.seed, "init");
    std::unique_ptr<Model> model = build_model(cfg.arch, cfg.net, init_rng);
    Adam opt(cfg.lr, cfg.beta1, cfg.beta2);

    int start_epoch = 0;
    long long global_step = 0;
    if (resume) {
        auto state = load_checkpoint(ckpt_path);
        load_model_state(*model, state);
        opt.load_state(state, model->params().size());
        start_epoch = static_cast<int>(state.at("meta/epoch_done")[0]);
        global_step = static_cast<long long>(state.at("meta/global_step")[0]);
    }

    std::ofstream metrics(metrics_path, resume ? std::ios::app : std::ios::trunc);
    if (!metrics) throw std::runtime_error("cannot open metric log: " + metrics_path);
    if (!resume) metrics << "epoch,step,loss,val_psnr,val_ssim\n";

    // Fixed validation corruption, independent of training progress.
    std::vector<Tensor> val_noisy;
    double noisy_psnr = 0.0;
    for (size_t i = 0; i < val_set.size(); ++i) {
        Rng r = Rng::stream(cfg.seed, "valnoise", i);
        val_noisy.push_back(corrupt(val_set[i], cfg.noise, r));
        noisy_psnr += psnr(val_noisy.back(), val_set[i]);
    }
    if (!val_set.empty()) noisy_psnr /= static_cast<double>(val_set.size());

    auto validate = [&]() {
        double p = 0.0, s = 0.0;
        for (size_t i = 0; i < val_set.size(); ++i) {
            Tensor den;
            if (cfg.method == Method::R2R) {
                Rng r = Rng::stream(cfg.seed, "r2r_infer", i);
                den = denoise_image_r2r(*model, val_noisy[i], cfg.net.depth, cfg.noise.sigma,
                                        cfg.r2r_alpha, cfg.r2r_passes, r);
            } else {
                den = denoise_image(*model, val_noisy[i], cfg.net.depth);
            }
            p += psnr(den, val_set[i]);
            s += ssim(den, val_set[i]);
        }
        const double inv = val_set.empty() ? 0.0 : 1.0 / static_cast<double>(val_set.size());
        return std::pair<double, double>{p * inv, s * inv};
    };

    TrainResult result;
    result.noisy_val_psnr = noisy_psnr;
    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        for (int step = 0; step < cfg.steps_per_epoch; ++step, ++global_step) {
            // Batch randomness derives from (seed, global step), so the
            // trajectory is schedule-independent and resumable.
            Rng rng = Rng::stream(cfg.seed, "data", static_cast<uint64_t>(global_step));
            model->zero_grads();
            double batch_loss = 0.0;
            for (int b = 0; b < cfg.batch_size; ++b) {
                const int idx = rng.uniform_int(0, static_cast<int>(train_set.size()) - 1);
                Tensor patch = random_patch(train_set[static_cast<size_t>(idx)], cfg.patch, rng);
                Var loss = example_loss(cfg, *model, patch, rng);
                if (!std::isfinite(loss.value()[0]))
                    throw std::runtime_error(
                        "non-finite training loss at epoch " + std::to_string(epoch) + " step " +
                        std::to_string(step) + " (batch seed " +
                        std::to_string(Rng::mix(cfg.seed, "data",
                                                static_cast<uint64_t>(global_step))) +
                        ")");
                loss.backward(Tensor::scalar(1.0 / cfg.batch_size));
                batch_loss += loss.value()[0] / cfg.batch_size;
            }
            opt.step(model->params());
            loss_sum += batch_loss;
            result.final_loss = batch_loss;
            metrics << epoch << ',' << global_step << ',' << batch_loss << ",,\n";
        }
        auto [vp, vs] = validate();
        EpochLog log{epoch, cfg.steps_per_epoch, loss_sum / cfg.steps_per_epoch, vp, vs};
        result.log.push_back(log);
        metrics << epoch << ',' << global_step << ',' << log.mean_loss << ',' << vp << ',' << vs
                << '\n';
        metrics.flush();
        result.final_val_psnr = vp;
        result.final_val_ssim = vs;

        std::map<std::string, Tensor> state = model_state(*model);
        opt.save_state(state);
        encode_train_meta(cfg, state);
        state["meta/epoch_done"] = Tensor::scalar(epoch + 1);
        state["meta/global_step"] = Tensor::scalar(static_cast<double>(global_step));
        save_checkpoint(ckpt_path, state);
    }
    result.checkpoint_path = ckpt_path;
    result.total_steps = global_step;
    return result;
}

}  // namespace eqd
