#include <exception>
#include <iostream>

#include "CLI11.hpp"
#include "eqdenoise/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Rotation-equivariant self-supervised image denoising"};
    app.require_subcommand(1);

    eqd::cli::Options opt;
    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", opt.config, "run configuration file");
        if (needs_config) c->required();
        sub->add_option("--out", opt.out, "output directory");
        sub->add_option("--seed", opt.seed, "master seed (overrides config)")
            ->each([&](const std::string&) { opt.seed_set = true; });
        return sub;
    };

    auto* verify = add_common(app.add_subcommand("verify-equivariance",
                                                 "run the operator/network equivariance sweeps"),
                              true);
    auto* train = add_common(app.add_subcommand("train", "self-supervised training"), true);
    train->add_flag("--dry-run", opt.dry_run, "validate config and print resolved settings");
    train->add_flag("--resume", opt.resume, "continue from the checkpoint in --out");
    auto* denoise =
        add_common(app.add_subcommand("denoise", "apply a trained checkpoint to images"), false);
    denoise->add_option("paths", opt.args, "checkpoint followed by image file(s) or a directory")
        ->expected(-2);
    denoise->add_option("--reference", opt.reference,
                        "directory of clean references; prints PSNR/SSIM");
    auto* report =
        add_common(app.add_subcommand("report", "consolidate run directories"), false);
    report->add_option("dirs", opt.args, "run directories")->expected(-1);

    CLI11_PARSE(app, argc, argv);

    try {
        if (verify->parsed()) return eqd::cli::cmd_verify_equivariance(opt);
        if (train->parsed()) return eqd::cli::cmd_train(opt);
        if (denoise->parsed()) return eqd::cli::cmd_denoise(opt);
        if (report->parsed()) return eqd::cli::cmd_report(opt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
