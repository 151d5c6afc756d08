#include "eqdenoise/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include "eqdenoise/checkpoint.hpp"
#include "eqdenoise/config.hpp"
#include "eqdenoise/harness.hpp"
#include "eqdenoise/image_io.hpp"
#include "eqdenoise/models.hpp"
#include "eqdenoise/selfsup.hpp"

#include "json.hpp"

namespace eqd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

uint64_t effective_seed(const Options& opt, const Config& cfg, const std::string& key) {
    if (opt.seed_set) return opt.seed;
    return static_cast<uint64_t>(cfg.integer(key, 1));
}

Tensor sample_image_rotated(const SmoothTestFunction& f, int n, double theta) {
    const double h = kDomainLength / n;
    const double c = std::cos(theta), s = std::sin(theta);
    Tensor img(Shape{1, n, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double x1 = (i - (n - 1) / 2.0) * h;
            const double x2 = (j - (n - 1) / 2.0) * h;
            img.at3(0, i, j) = f.eval(c * x1 - s * x2, s * x1 + c * x2, 0);
        }
    return img;
}

struct OpCase {
    std::string name;
    double slope_threshold = 0.8;
    bool has_bound = false;
    double bound_factor = 0.0;  // bound = factor * G * h
    MapOp op;
};

std::vector<OpCase> resolve_operators(const std::vector<std::string>& names,
                                      const BasisIndexSet& basis, double filter_h,
                                      const RotationGroup& group, const Tensor& conv_coeffs) {
    const double down_factor = 2.0 * std::sqrt(2.0);
    const double up_factor = 2.0 * (std::sqrt(2.0) + 1.0);
    std::vector<OpCase> cases;
    for (const std::string& name : names) {
        OpCase c;
        c.name = name;
        if (name == "identity") {
            c.op = [](const GroupFeatureMap& F) { return F; };
        } else if (name == "maxpool") {
            c.has_bound = true;
            c.bound_factor = down_factor;
            c.op = [](const GroupFeatureMap& F) { return maxpool_down(F); };
        } else if (name == "stride") {
            c.has_bound = true;
            c.bound_factor = down_factor;
            c.op = [](const GroupFeatureMap& F) { return stride_down(F); };
        } else if (name == "nearest") {
            c.has_bound = true;
            c.bound_factor = up_factor;
            c.op = [](const GroupFeatureMap& F) { return upsample_nearest(F); };
        } else if (name == "bilinear") {
            c.has_bound = true;
            c.bound_factor = up_factor;
            c.op = [](const GroupFeatureMap& F) { return upsample_bilinear(F); };
        } else if (name == "conv") {
            c.slope_threshold = 1.7;
            c.op = [&basis, filter_h, &group, conv_coeffs](const GroupFeatureMap& F) {
                return quad_group_conv(F, conv_coeffs, basis, filter_h, group);
            };
        } else {
            throw std::runtime_error("unknown operator: " + name);
        }
        cases.push_back(std::move(c));
    }
    return cases;
}

// Full-network sweep: equivariance error of a randomly initialized
// mesh-refinable equivariant U-Net at a group angle, exact rotated input
// branch.
EquivarianceReport unet_sweep(const QuadUNet& net, int shift,
                              const std::vector<int>& resolutions, uint64_t seed) {
    const double theta = 2.0 * kPi * shift / net.t;
    Rng frng = Rng::stream(seed, "field");
    SmoothTestFunction f = SmoothTestFunction::random(1, 4, 6.0, frng);

    // Boundary band contaminated by zero padding: one physical receptive
    // radius per conv layer.
    const double receptive = 7.0 * (net.basis.p + 1) * net.filter_h / 2.0;

    EquivarianceReport report;
    report.op_name = "unet";
    report.t = net.t;
    report.theta = theta;
    for (int n : resolutions) {
        Tensor img(Shape{1, n, n});
        {
            ImageGrid g = sample_image(f, n);
            img = g.I;
        }
        Tensor img_rot = sample_image_rotated(f, n, theta);
        const double h = kDomainLength / n;
        const int margin = 2 + static_cast<int>(std::ceil(receptive / h));
        NetworkError err = network_equivariance_error(
            [&net](const Tensor& x) { return net.apply(x); }, img, img_rot, theta, margin);
        SweepPoint pt;
        pt.n = n;
        pt.h = h;
        pt.error = err.abs_max;
        pt.exact = pt.error < 1e-13;
        report.points.push_back(pt);
    }
    report.all_exact = true;
    for (const SweepPoint& p : report.points)
        if (!p.exact) report.all_exact = false;
    fit_loglog(report);
    fit_rate_model(report);
    return report;
}

TrainConfig train_config_from(const Config& cfg, const Options& opt) {
    TrainConfig tc;
    tc.method = method_from_string(cfg.str("train.method", "n2n"));
    const std::string arch = cfg.str("train.arch", "equivariant");
    if (arch == "vanilla")
        tc.arch = ArchKind::Vanilla;
    else if (arch == "equivariant")
        tc.arch = ArchKind::Equivariant;
    else if (arch == "adarenet")
        tc.arch = ArchKind::AdaReNet;
    else
        throw std::runtime_error("unknown architecture: " + arch);
    tc.net.depth = cfg.integer("model.depth", tc.net.depth);
    tc.net.base_channels = cfg.integer("model.base_channels", tc.net.base_channels);
    tc.net.filter_size = cfg.integer("model.filter_size", tc.net.filter_size);
    tc.net.t = cfg.integer("model.t", tc.net.t);
    tc.rgb = cfg.boolean("data.rgb", false);
    tc.net.in_channels = tc.rgb ? 3 : 1;
    const std::string down = cfg.str("model.down", "maxpool");
    if (down == "maxpool")
        tc.net.down = DownKind::MaxPool;
    else if (down == "stride")
        tc.net.down = DownKind::Stride;
    else
        throw std::runtime_error("unknown downsampling kind: " + down);
    const std::string up = cfg.str("model.up", "nearest");
    if (up == "nearest")
        tc.net.up = UpKind::Nearest;
    else if (up == "bilinear")
        tc.net.up = UpKind::Bilinear;
    else
        throw std::runtime_error("unknown upsampling kind: " + up);
    tc.noise.kind = noise_kind_from_string(cfg.str("noise.kind", "gaussian"));
    tc.noise.sigma = cfg.real("noise.sigma", tc.noise.sigma);
    tc.noise.sigma_min = cfg.real("noise.sigma_min", tc.noise.sigma_min);
    tc.noise.sigma_max = cfg.real("noise.sigma_max", tc.noise.sigma_max);
    tc.noise.poisson_scale = cfg.real("noise.poisson_scale", tc.noise.poisson_scale);
    tc.noise.density = cfg.real("noise.density", tc.noise.density);
    tc.noise.variance = cfg.real("noise.variance", tc.noise.variance);
    tc.lr = cfg.real("train.lr", tc.lr);
    tc.beta1 = cfg.real("train.beta1", tc.beta1);
    tc.beta2 = cfg.real("train.beta2", tc.beta2);
    tc.batch_size = cfg.integer("train.batch_size", tc.batch_size);
    tc.patch = cfg.integer("train.patch", tc.patch);
    tc.epochs = cfg.integer("train.epochs", tc.epochs);
    tc.steps_per_epoch = cfg.integer("train.steps_per_epoch", tc.steps_per_epoch);
    tc.seed = effective_seed(opt, cfg, "train.seed");
    tc.dataset_dir = cfg.str("data.dir");
    tc.val_count = cfg.integer("train.val_count", tc.val_count);
    tc.alpha1 = cfg.real("loss.alpha1", tc.alpha1);
    tc.alpha2 = cfg.real("loss.alpha2", tc.alpha2);
    tc.n2v_count = cfg.integer("n2v.count", tc.n2v_count);
    tc.n2v_window = cfg.integer("n2v.window", tc.n2v_window);
    tc.r2r_alpha = cfg.real("r2r.alpha", tc.r2r_alpha);
    tc.r2r_passes = cfg.integer("r2r.passes", tc.r2r_passes);
    return tc;
}

void print_resolved(const TrainConfig& tc) {
    std::cout << "method = " << to_string(tc.method) << "\n"
              << "arch = "
              << (tc.arch == ArchKind::Vanilla
                      ? "vanilla"
                      : tc.arch == ArchKind::Equivariant ? "equivariant" : "adarenet")
              << "\n"
              << "model.depth = " << tc.net.depth << "\n"
              << "model.base_channels = " << tc.net.base_channels << "\n"
              << "model.filter_size = " << tc.net.filter_size << "\n"
              << "model.t = " << tc.net.t << "\n"
              << "model.down = " << (tc.net.down == DownKind::MaxPool ? "maxpool" : "stride")
              << "\n"
              << "model.up = " << (tc.net.up == UpKind::Nearest ? "nearest" : "bilinear") << "\n"
              << "noise.kind = " << to_string(tc.noise.kind) << "\n"
              << "noise.sigma = " << tc.noise.sigma << "\n"
              << "train.lr = " << tc.lr << "\n"
              << "train.batch_size = " << tc.batch_size << "\n"
              << "train.patch = " << tc.patch << "\n"
              << "train.epochs = " << tc.epochs << "\n"
              << "train.steps_per_epoch = " << tc.steps_per_epoch << "\n"
              << "train.seed = " << tc.seed << "\n"
              << "data.dir = " << tc.dataset_dir << "\n"
              << "data.rgb = " << (tc.rgb ? "true" : "false") << "\n";
}

struct RunRow {
    std::string dir, method, arch, noise;
    double loss = 0.0, psnr = 0.0, ssim = 0.0;
    bool valid = false;
};

RunRow read_run(const std::string& dir) {
    RunRow row;
    row.dir = dir;
    const std::string metrics = dir + "/metrics.csv";
    std::ifstream is(metrics);
    if (!is) throw std::runtime_error("no metrics.csv in " + dir);
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string epoch, step, loss, psnr, ssim;
        std::getline(ls, epoch, ',');
        std::getline(ls, step, ',');
        std::getline(ls, loss, ',');
        std::getline(ls, psnr, ',');
        std::getline(ls, ssim, ',');
        if (psnr.empty()) continue;  // per-step row, no validation columns
        row.loss = std::stod(loss);
        row.psnr = std::stod(psnr);
        row.ssim = std::stod(ssim);
        row.valid = true;
    }
    if (!row.valid) throw std::runtime_error("no completed epoch rows in " + metrics);
    if (fs::exists(dir + "/config.ini")) {
        Config cfg = Config::load(dir + "/config.ini");
        row.method = cfg.str("train.method", "");
        row.arch = cfg.str("train.arch", "");
        row.noise = cfg.str("noise.kind", "") + cfg.str("noise.sigma", "");
    }
    return row;
}

}  // namespace

int cmd_verify_equivariance(const Options& opt) {
    Config cfg = Config::load(opt.config);
    const uint64_t seed = effective_seed(opt, cfg, "equivariance.seed");
    const int t = cfg.integer("equivariance.t", 8);
    const int fields = cfg.integer("equivariance.fields", 3);
    const std::vector<int> resolutions =
        cfg.int_list("equivariance.resolutions", {32, 64, 128, 256});
    const std::vector<int> unet_resolutions =
        cfg.int_list("equivariance.unet_resolutions", {64, 128, 256});
    std::vector<int> shifts = cfg.int_list("equivariance.shifts", {t / 4, t / 8});
    std::erase_if(shifts, [&](int s) { return s <= 0 || s >= t; });
    if (shifts.empty()) shifts = {t / 2};
    std::vector<std::string> names = cfg.has("equivariance.operators")
                                         ? cfg.str_list("equivariance.operators")
                                         : std::vector<std::string>{"maxpool", "stride", "nearest",
                                                                    "bilinear", "conv", "unet"};

    const bool want_unet = std::erase(names, std::string("unet")) > 0;
    const int p = cfg.integer("equivariance.filter_size", 3);
    const double conv_filter_h = cfg.real("equivariance.conv_filter_h", 0.075);
    BasisIndexSet basis = aliasing_mask(p);
    RotationGroup group(t);
    Rng crng = Rng::stream(seed, "conv_coeffs");
    Tensor conv_coeffs =
        random_coeffs(Shape{1, 1, t, basis.count()}, basis, t * p * p, crng);
    std::vector<OpCase> cases = resolve_operators(names, basis, conv_filter_h, group, conv_coeffs);

    std::vector<EquivarianceReport> reports;
    json summary;
    summary["reports"] = json::array();
    bool all_pass = true;

    for (const OpCase& c : cases) {
        for (int shift : shifts) {
            for (int fi = 0; fi < fields; ++fi) {
                Rng frng = Rng::stream(seed, "field", static_cast<uint64_t>(fi));
                SmoothTestFunction f = SmoothTestFunction::random(t, 4, 6.0, frng);
                const double bound_per_h = c.has_bound ? c.bound_factor * f.gradient_bound : 0.0;
                EquivarianceReport r =
                    mesh_sweep(c.op, c.name, f, resolutions, shift, t, bound_per_h);
                const bool pass =
                    !r.bound_violated && (r.all_exact || r.slope >= c.slope_threshold);
                all_pass = all_pass && pass;
                summary["reports"].push_back({{"operator", c.name},
                                              {"theta", r.theta},
                                              {"t", t},
                                              {"field", fi},
                                              {"slope", r.slope},
                                              {"exact", r.all_exact},
                                              {"bound_violated", r.bound_violated},
                                              {"r1", r.fitted_r1},
                                              {"r2", r.fitted_r2},
                                              {"pass", pass}});
                reports.push_back(std::move(r));
            }
        }
    }

    if (want_unet) {
        const double unet_filter_h = cfg.real("equivariance.unet_filter_h", 0.04);
        const int unet_base = cfg.integer("equivariance.unet_base_channels", 1);
        QuadUNet net = QuadUNet::random(t, p, unet_filter_h, unet_base, seed);
        const int shift = shifts.front();
        EquivarianceReport r = unet_sweep(net, shift, unet_resolutions, seed);
        const bool pass = r.all_exact || r.slope >= 0.8;
        all_pass = all_pass && pass;
        summary["reports"].push_back({{"operator", "unet"},
                                      {"theta", r.theta},
                                      {"t", t},
                                      {"slope", r.slope},
                                      {"exact", r.all_exact},
                                      {"bound_violated", r.bound_violated},
                                      {"r1", r.fitted_r1},
                                      {"r2", r.fitted_r2},
                                      {"pass", pass}});
        reports.push_back(std::move(r));
    }

    summary["pass"] = all_pass;

    // All computation succeeded; only now touch the filesystem.
    fs::create_directories(opt.out);
    write_reports_csv(reports, opt.out + "/equivariance.csv");
    std::ofstream js(opt.out + "/summary.json");
    js << summary.dump(2) << "\n";
    std::cout << (all_pass ? "PASS" : "FAIL") << " (" << reports.size() << " sweeps)\n";
    return all_pass ? 0 : 1;
}

int cmd_train(const Options& opt) {
    Config cfg = Config::load(opt.config);
    TrainConfig tc = train_config_from(cfg, opt);
    tc.validate();
    if (opt.dry_run) {
        print_resolved(tc);
        return 0;
    }
    fs::create_directories(opt.out);
    if (fs::absolute(opt.config) != fs::absolute(opt.out + "/config.ini"))
        fs::copy_file(opt.config, opt.out + "/config.ini", fs::copy_options::overwrite_existing);
    TrainResult res = train(tc, opt.out, opt.resume);
    std::cout << "checkpoint: " << res.checkpoint_path << "\n"
              << "noisy val PSNR: " << res.noisy_val_psnr << "\n"
              << "final val PSNR: " << res.final_val_psnr << "\n"
              << "final val SSIM: " << res.final_val_ssim << "\n";
    return 0;
}

int cmd_denoise(const Options& opt) {
    if (opt.args.size() < 2)
        throw std::runtime_error("usage: denoise <checkpoint> <image-or-dir> [--out DIR]");
    const std::string ckpt_path = opt.args[0];
    std::vector<std::string> inputs;
    if (fs::is_directory(opt.args[1]))
        inputs = list_images(opt.args[1]);
    else
        for (size_t i = 1; i < opt.args.size(); ++i) inputs.push_back(opt.args[i]);
    if (inputs.empty()) throw std::runtime_error("no input images");

    auto state = load_checkpoint(ckpt_path);
    TrainConfig meta = decode_train_meta(state);
    Rng dummy = Rng::stream(0, "init");
    std::unique_ptr<Model> model = build_model(meta.arch, meta.net, dummy);
    load_model_state(*model, state);

    const uint64_t seed = opt.seed_set ? opt.seed : 1;
    fs::create_directories(opt.out);
    for (size_t i = 0; i < inputs.size(); ++i) {
        Tensor img = load_image(inputs[i]);
        if (meta.net.in_channels == 1) img = to_gray(img);
        Tensor out;
        if (meta.method == Method::R2R) {
            Rng r = Rng::stream(seed, "r2r_infer", i);
            out = denoise_image_r2r(*model, img, meta.net.depth, meta.noise.sigma,
                                    meta.r2r_alpha, meta.r2r_passes, r);
        } else {
            out = denoise_image(*model, img, meta.net.depth);
        }
        std::string name = fs::path(inputs[i]).filename().string();
        if (meta.net.in_channels == 1) {
            // grayscale output: keep PNG, otherwise force PGM
            const std::string ext = fs::path(name).extension().string();
            if (ext != ".png") name = fs::path(name).stem().string() + ".pgm";
        }
        const std::string out_path = opt.out + "/" + name;
        save_image(out_path, out);
        if (!opt.reference.empty()) {
            const std::string ref_path =
                opt.reference + "/" + fs::path(inputs[i]).filename().string();
            Tensor ref = load_image(ref_path);
            if (meta.net.in_channels == 1) ref = to_gray(ref);
            std::cout << name << " psnr=" << psnr(out, ref) << " ssim=" << ssim(out, ref)
                      << "\n";
        } else {
            std::cout << name << "\n";
        }
    }
    return 0;
}

int cmd_report(const Options& opt) {
    if (opt.args.empty()) throw std::runtime_error("report: no run directories given");
    std::vector<RunRow> rows;
    for (const std::string& dir : opt.args) rows.push_back(read_run(dir));

    size_t best_psnr = 0, best_ssim = 0;
    double mean_psnr = 0, mean_ssim = 0, mean_loss = 0;
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].psnr > rows[best_psnr].psnr) best_psnr = i;
        if (rows[i].ssim > rows[best_ssim].ssim) best_ssim = i;
        mean_psnr += rows[i].psnr;
        mean_ssim += rows[i].ssim;
        mean_loss += rows[i].loss;
    }
    mean_psnr /= static_cast<double>(rows.size());
    mean_ssim /= static_cast<double>(rows.size());
    mean_loss /= static_cast<double>(rows.size());

    fs::create_directories(opt.out);
    std::ofstream csv(opt.out + "/comparison.csv");
    csv << "run,method,arch,noise,loss,val_psnr,val_ssim,best\n";
    json jrows = json::array();
    for (size_t i = 0; i < rows.size(); ++i) {
        const RunRow& r = rows[i];
        std::string best;
        if (i == best_psnr) best += "psnr";
        if (i == best_ssim) best += best.empty() ? "ssim" : "+ssim";
        csv << r.dir << ',' << r.method << ',' << r.arch << ',' << r.noise << ',' << r.loss << ','
            << r.psnr << ',' << r.ssim << ',' << best << '\n';
        jrows.push_back({{"run", r.dir},
                         {"method", r.method},
                         {"arch", r.arch},
                         {"noise", r.noise},
                         {"loss", r.loss},
                         {"val_psnr", r.psnr},
                         {"val_ssim", r.ssim}});
    }
    csv << "mean,,,," << mean_loss << ',' << mean_psnr << ',' << mean_ssim << ",\n";
    json summary = {{"runs", jrows},
                    {"mean", {{"loss", mean_loss}, {"val_psnr", mean_psnr}, {"val_ssim", mean_ssim}}},
                    {"best_psnr_run", rows[best_psnr].dir},
                    {"best_ssim_run", rows[best_ssim].dir}};
    std::ofstream js(opt.out + "/comparison.json");
    js << summary.dump(2) << "\n";
    std::cout << "wrote " << opt.out << "/comparison.csv (" << rows.size() << " runs)\n";
    return 0;
}

}  // namespace eqd::cli
