// sbd: semi-blind deblurring toolkit.
//
// Subcommands: deblur (run the solver on a blurry image + inaccurate kernel),
// simulate (synthesize a degraded instance), sweep (kernel-bias robustness
// recipe), ablate (prior-ablation matrix), metrics (standalone image
// metrics), synth (deterministic test images).
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sbd/degradation.hpp"
#include "sbd/harness.hpp"
#include "sbd/image_io.hpp"
#include "sbd/signal.hpp"
#include "sbd/solver.hpp"
#include "sbd/sweep.hpp"
#include "sbd/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// flat key=value config file; '#' starts a comment line
std::map<std::string, std::string> load_flat_config(const std::string& path) {
    std::ifstream f(path);
    sbd::require(f.good(), "cannot open config file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        sbd::require(eq != std::string::npos, "malformed config line: " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

struct SolverFlags {
    std::uint64_t seed = 0;
    int iters = -1; // -1: keep config default
    double lambda1 = -1, lambda2 = -1, lambda3 = -1;
    double lr_image = -1, lr_residual = -1;
    double prox_L = -1;

    void apply(sbd::SolverConfig& cfg) const {
        cfg.seed = seed;
        if (iters >= 0) cfg.iterations = iters;
        if (lambda1 >= 0) cfg.lambda1 = lambda1;
        if (lambda2 >= 0) cfg.lambda2 = lambda2;
        if (lambda3 >= 0) cfg.lambda3 = lambda3;
        if (lr_image >= 0) cfg.lr_image = lr_image;
        if (lr_residual >= 0) cfg.lr_residual = lr_residual;
        if (prox_L > 0) cfg.prox_step_L = prox_L;
    }
};

void add_solver_flags(CLI::App* app, SolverFlags& f) {
    app->add_option("--seed", f.seed, "Run seed (drives net init and noise inputs)")
        ->capture_default_str();
    app->add_option("--iters", f.iters, "Outer iterations (default: solver default)");
    app->add_option("--lambda1", f.lambda1, "TV weight");
    app->add_option("--lambda2", f.lambda2, "Residual L1 weight");
    app->add_option("--lambda3", f.lambda3, "DCT-coefficient L1 weight");
    app->add_option("--lr-image", f.lr_image, "Adam learning rate for the image net");
    app->add_option("--lr-residual", f.lr_residual, "Adam learning rate for the residual net");
    app->add_option("--prox-L", f.prox_L, "Proximal step constant L for the v-update");
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

sbd::KernelSpec parse_kernel_spec(const std::string& family, const std::vector<double>& params) {
    sbd::KernelSpec spec;
    spec.family = sbd::family_from_name(family);
    spec.params = params;
    sbd::require(params.size() == spec.arity(),
                 "family " + family + " expects " + std::to_string(spec.arity()) +
                     " parameters, got " + std::to_string(params.size()));
    return spec;
}

std::vector<double> default_bias_grid(sbd::KernelFamily fam) {
    switch (fam) {
        case sbd::KernelFamily::Motion: return {-20, -15, -10, -5, 0, 5, 10, 15, 20};
        case sbd::KernelFamily::Gaussian:
        case sbd::KernelFamily::Disk: return {-2, -1.5, -1, -0.5, 0, 0.5, 1, 1.5, 2};
    }
    sbd::fail("unknown family");
}

std::vector<std::pair<std::string, sbd::Image>> load_clean_images(
    const std::vector<std::string>& paths, const std::string& outdir) {
    std::vector<std::pair<std::string, sbd::Image>> images;
    if (paths.empty()) {
        // no clean images given: fall back to a deterministic synthetic one
        sbd::Image x = sbd::synth_image(128, 128, 1);
        const std::string p = outdir + "/clean_synth.png";
        sbd::save_image(x, p);
        images.emplace_back("clean_synth", sbd::load_image(p)); // quantized version
    } else {
        for (const auto& p : paths)
            images.emplace_back(fs::path(p).stem().string(), sbd::load_image(p));
    }
    return images;
}

int cmd_deblur(const std::string& blurry_path, const std::string& kernel_path,
               const std::string& truth_path, const std::string& true_kernel_path,
               const std::string& outdir, const SolverFlags& flags, const std::string& ablation,
               bool trace, const std::string& save_state, const std::string& resume,
               bool fixed_timing) {
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(outdir);

    sbd::Image y = sbd::load_image(blurry_path);
    sbd::Kernel k_hat = sbd::load_kernel(kernel_path);
    std::optional<sbd::Image> truth;
    std::optional<sbd::Kernel> k_true;
    if (!truth_path.empty()) truth = sbd::load_image(truth_path);
    if (!true_kernel_path.empty()) k_true = sbd::load_kernel(true_kernel_path);

    sbd::SolverConfig cfg;
    flags.apply(cfg);
    cfg.ablation = sbd::ablation_from_name(ablation);

    sbd::DeblurOutcome out;
    if (!resume.empty() || !save_state.empty()) {
        // run through an explicit Solver so optimizer state can round-trip
        const int factor = 1 << cfg.net.depth;
        auto [y_pad, crop] = sbd::pad_to_divisible(y, factor);
        sbd::Solver solver(y_pad, k_hat, cfg);
        if (!resume.empty()) solver.load_state(resume);
        sbd::SolverResult res = solver.run();
        if (!save_state.empty()) solver.save_state(save_state);
        out.x_hat = sbd::crop_to(res.x_hat, crop);
        out.r_hat = sbd::crop_to(res.r_hat, crop);
        out.h_hat = sbd::crop_to(res.h_hat, crop);
        out.trace = std::move(res.trace);
        if (truth) {
            out.psnr_x = sbd::psnr(*truth, out.x_hat);
            out.ssim_x = sbd::ssim(*truth, out.x_hat);
            out.psnr_blurry = sbd::psnr(*truth, y);
            if (k_true) {
                const sbd::Image r_true = sbd::true_residual(*truth, *k_true, k_hat);
                out.residual_mse = sbd::mean_squared_error(r_true, out.r_hat);
                out.residual_zero_mse = sbd::mean_squared_error(
                    r_true, sbd::Image(y.channels, y.height, y.width, 0.0));
            }
        }
    } else {
        out = sbd::deblur_run(y, k_hat, cfg, truth ? &*truth : nullptr,
                              k_true ? &*k_true : nullptr);
    }

    sbd::save_image(out.x_hat, outdir + "/x_hat.png");
    sbd::Image vis;
    const double r_scale = sbd::visualize_signed(out.r_hat, vis);
    sbd::save_image(vis, outdir + "/r_hat.png");
    const double h_scale = sbd::visualize_signed(out.h_hat, vis);
    sbd::save_image(vis, outdir + "/h_hat.png");
    if (trace) sbd::write_loss_csv(outdir + "/loss.csv", out.trace);

    // config echo: feeding this back via --config reproduces the run
    {
        std::ofstream f(outdir + "/config_echo.cfg");
        f << "blurry=" << blurry_path << "\n";
        f << "kernel=" << kernel_path << "\n";
        if (!truth_path.empty()) f << "truth=" << truth_path << "\n";
        if (!true_kernel_path.empty()) f << "true-kernel=" << true_kernel_path << "\n";
        f << "out=" << outdir << "\n";
        f << "seed=" << cfg.seed << "\n";
        f << "iters=" << cfg.iterations << "\n";
        f << "lambda1=" << fmt_double(cfg.lambda1) << "\n";
        f << "lambda2=" << fmt_double(cfg.lambda2) << "\n";
        f << "lambda3=" << fmt_double(cfg.lambda3) << "\n";
        f << "lr-image=" << fmt_double(cfg.lr_image) << "\n";
        f << "lr-residual=" << fmt_double(cfg.lr_residual) << "\n";
        f << "prox-L=" << fmt_double(cfg.prox_step_L) << "\n";
        f << "ablation=" << sbd::ablation_name(cfg.ablation) << "\n";
        if (trace) f << "trace=true\n";
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json rep;
    rep["command"] = "deblur";
    rep["inputs"] = {{"blurry", blurry_path},
                     {"kernel", kernel_path},
                     {"truth", truth_path.empty() ? json(nullptr) : json(truth_path)},
                     {"true_kernel",
                      true_kernel_path.empty() ? json(nullptr) : json(true_kernel_path)}};
    rep["config"] = {{"seed", cfg.seed},
                     {"iters", cfg.iterations},
                     {"lambda1", cfg.lambda1},
                     {"lambda2", cfg.lambda2},
                     {"lambda3", cfg.lambda3},
                     {"lr_image", cfg.lr_image},
                     {"lr_residual", cfg.lr_residual},
                     {"prox_L", cfg.prox_step_L},
                     {"ablation", sbd::ablation_name(cfg.ablation)}};
    rep["metrics"] = {
        {"psnr", out.psnr_x ? json(*out.psnr_x) : json(nullptr)},
        {"ssim", out.ssim_x ? json(*out.ssim_x) : json(nullptr)},
        {"psnr_blurry", out.psnr_blurry ? json(*out.psnr_blurry) : json(nullptr)},
        {"residual_mse", out.residual_mse ? json(*out.residual_mse) : json(nullptr)},
        {"residual_zero_mse",
         out.residual_zero_mse ? json(*out.residual_zero_mse) : json(nullptr)}};
    rep["artifacts"] = {{"x_hat", outdir + "/x_hat.png"},
                        {"r_hat", outdir + "/r_hat.png"},
                        {"h_hat", outdir + "/h_hat.png"}};
    if (trace) rep["artifacts"]["loss_csv"] = outdir + "/loss.csv";
    rep["residual_vis_scale"] = r_scale;
    rep["h_vis_scale"] = h_scale;
    rep["wall_clock_s"] = fixed_timing ? 0.0 : wall;
    rep["trace_len"] = out.trace.size();
    std::ofstream(outdir + "/report.json") << rep.dump(2) << "\n";

    if (out.psnr_x)
        std::printf("psnr %.4f  ssim %.6f  (blurry psnr %.4f)\n", *out.psnr_x, *out.ssim_x,
                    *out.psnr_blurry);
    if (out.residual_mse)
        std::printf("residual mse %.8e  (zero-residual baseline %.8e)\n", *out.residual_mse,
                    *out.residual_zero_mse);
    std::printf("outputs written to %s\n", outdir.c_str());
    return 0;
}

int cmd_simulate(const std::string& clean_path, const std::string& family,
                 const std::vector<double>& params, std::vector<double> bias, double noise,
                 std::uint64_t seed, const std::string& outdir) {
    fs::create_directories(outdir);
    const sbd::KernelSpec spec = parse_kernel_spec(family, params);
    if (bias.empty()) bias.assign(spec.arity(), 0.0);
    sbd::require(bias.size() == spec.arity(), "bias must have one entry per kernel parameter");

    const sbd::Image x = sbd::load_image(clean_path);
    const sbd::Kernel k_true = sbd::realize(spec);
    const sbd::Kernel k_hat = sbd::realize(spec, bias);
    const sbd::Image y = sbd::simulate_blur(x, k_true, noise, seed);
    const sbd::Image r_true = sbd::true_residual(x, k_true, k_hat);

    sbd::save_image(y, outdir + "/blurry.png");
    sbd::save_kernel(k_true, outdir + "/kernel_true.txt");
    sbd::save_kernel(k_hat, outdir + "/kernel_hat.txt");
    sbd::Image vis;
    const double r_scale = sbd::visualize_signed(r_true, vis);
    sbd::save_image(vis, outdir + "/residual_true.png");

    std::ofstream man(outdir + "/manifest.txt");
    man << "clean=" << clean_path << "\n";
    man << "family=" << family << "\n";
    man << "params=";
    for (std::size_t i = 0; i < params.size(); ++i) man << (i ? "," : "") << fmt_double(params[i]);
    man << "\nbias=";
    for (std::size_t i = 0; i < bias.size(); ++i) man << (i ? "," : "") << fmt_double(bias[i]);
    man << "\nnoise_sigma=" << fmt_double(noise) << "\n";
    man << "seed=" << seed << "\n";
    man << "residual_vis_scale=" << fmt_double(r_scale) << "\n";
    std::printf("simulated instance written to %s\n", outdir.c_str());
    return 0;
}

int cmd_sweep(const std::vector<std::string>& clean_paths, const std::string& family,
              const std::vector<double>& params, int bias_param, std::vector<double> bias_grid,
              const std::vector<std::uint64_t>& seeds, double noise, const std::string& outdir,
              int jobs, const SolverFlags& flags, bool fixed_timing) {
    fs::create_directories(outdir);
    sbd::SweepSpec spec;
    spec.kernel_true = parse_kernel_spec(family, params);
    spec.bias_param = bias_param;
    spec.bias_grid =
        bias_grid.empty() ? default_bias_grid(spec.kernel_true.family) : std::move(bias_grid);
    spec.seeds = seeds;
    spec.noise_sigma = noise;
    spec.jobs = jobs;
    flags.apply(spec.solver);

    const auto images = load_clean_images(clean_paths, outdir);
    const auto rows = sbd::run_sweep(spec, images);
    sbd::write_sweep_csv(outdir + "/sweep.csv", rows, fixed_timing);
    sbd::write_sweep_failures(outdir + "/failures.log", rows);
    sbd::write_sweep_plots(outdir, rows);

    for (const auto& [bias, m] : sbd::sweep_bias_means(rows))
        std::printf("bias %+7.3f  mean psnr %.4f  mean ssim %.6f\n", bias, m.first, m.second);
    int failures = 0;
    for (const auto& r : rows) failures += r.ok ? 0 : 1;
    if (failures) std::fprintf(stderr, "%d sub-run(s) failed; see failures.log\n", failures);
    std::printf("sweep results written to %s\n", outdir.c_str());
    return 0;
}

int cmd_ablate(const std::vector<std::string>& clean_paths, const std::string& family,
               const std::vector<double>& params, std::vector<double> bias,
               const std::vector<std::uint64_t>& seeds, double noise, const std::string& outdir,
               int jobs, const SolverFlags& flags) {
    fs::create_directories(outdir);
    sbd::AblateSpec spec;
    spec.kernel_true = parse_kernel_spec(family, params);
    if (bias.empty()) {
        bias.assign(spec.kernel_true.arity(), 0.0);
        bias[static_cast<std::size_t>(sbd::default_bias_param(spec.kernel_true))] =
            spec.kernel_true.family == sbd::KernelFamily::Motion ? 10.0 : 0.5;
    }
    spec.kernel_bias = bias;
    spec.seeds = seeds;
    spec.noise_sigma = noise;
    spec.jobs = jobs;
    flags.apply(spec.solver);

    const auto images = load_clean_images(clean_paths, outdir);
    const auto runs = sbd::run_ablate_matrix(spec, images);
    const auto rows = sbd::ablate_aggregate(runs);
    sbd::write_ablate_csv(outdir + "/ablate.csv", rows);
    sbd::write_ablate_runs_csv(outdir + "/ablate_runs.csv", runs);

    for (const auto& r : rows)
        std::printf("%-14s mean psnr %.4f  mean ssim %.6f%s\n", sbd::ablation_name(r.mode).c_str(),
                    r.mean_psnr, r.mean_ssim, r.mode == sbd::AblationMode::Full ? "  [baseline]" : "");
    std::printf("ablation results written to %s\n", outdir.c_str());
    return 0;
}

int cmd_metrics(const std::string& ref_path, const std::string& est_path, bool unclamped) {
    const sbd::Image ref = sbd::load_image(ref_path);
    const sbd::Image est = sbd::load_image(est_path);
    if (unclamped) {
        std::printf("mse %.10e\n", sbd::mean_squared_error(ref, est));
        return 0;
    }
    std::printf("psnr %.6f\nssim %.8f\nmse %.10e\n", sbd::psnr(ref, est), sbd::ssim(ref, est),
                sbd::mse(ref, est));
    return 0;
}

int cmd_synth(const std::string& out, int size, int width, std::uint64_t seed, int channels) {
    if (width <= 0) width = size;
    sbd::save_image(sbd::synth_image(size, width, seed, channels), out);
    std::printf("synthetic image written to %s\n", out.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"semi-blind image deblurring with untrained generator priors"};
    app.require_subcommand(1);

    // deblur
    auto* deblur = app.add_subcommand("deblur", "Deblur a blurry image given an inaccurate kernel");
    std::string blurry, kernel, truth, true_kernel, outdir = "out", ablation = "full";
    std::string save_state, resume, config_path;
    bool trace = false, fixed_timing = false;
    SolverFlags dflags;
    deblur->add_option("--config", config_path, "Flat key=value config file (flags override)");
    deblur->add_option("--blurry", blurry, "Blurry input image (png/pgm/ppm)");
    deblur->add_option("--kernel", kernel, "Inaccurate kernel (text format)");
    deblur->add_option("--truth", truth, "Ground-truth clean image (enables PSNR/SSIM)");
    deblur->add_option("--true-kernel", true_kernel,
                       "True kernel (with --truth, enables residual MSE)");
    deblur->add_option("--out", outdir, "Output directory")->capture_default_str();
    add_solver_flags(deblur, dflags);
    deblur->add_option("--ablation", ablation,
                       "full|no_r_sparsity|no_v_sparsity|no_tv|no_dip|no_drp|no_r_term")
        ->capture_default_str();
    deblur->add_flag("--trace", trace, "Write per-iteration loss CSV");
    deblur->add_option("--save-state", save_state, "Write solver state checkpoint to PREFIX");
    deblur->add_option("--resume", resume, "Resume solver state from PREFIX");
    deblur->add_flag("--fixed-timing", fixed_timing, "Report wall time as 0 (byte-stable output)");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Synthesize a degraded instance");
    std::string s_clean, s_family = "gaussian", s_out = "sim_out";
    std::vector<double> s_params, s_bias;
    double s_noise = 0.01;
    std::uint64_t s_seed = 0;
    simulate->add_option("--clean", s_clean, "Clean input image")->required();
    simulate->add_option("--family", s_family, "motion|gaussian|disk")->required();
    simulate->add_option("--params", s_params, "Kernel parameters (comma separated)")
        ->required()
        ->delimiter(',');
    simulate->add_option("--bias", s_bias, "Additive parameter bias for the inaccurate kernel")
        ->delimiter(',');
    simulate->add_option("--noise", s_noise, "Gaussian noise sigma (fraction of range)")
        ->capture_default_str();
    simulate->add_option("--seed", s_seed, "Noise seed")->capture_default_str();
    simulate->add_option("--out", s_out, "Output directory")->capture_default_str();

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Kernel-parameter-bias robustness sweep");
    std::vector<std::string> w_clean;
    std::string w_family = "gaussian", w_out = "sweep_out";
    std::vector<double> w_params{9, 2}, w_grid;
    std::vector<std::uint64_t> w_seeds{0, 1, 2};
    int w_bias_param = -1, w_jobs = 1;
    double w_noise = 0.01;
    bool w_fixed_timing = false;
    SolverFlags wflags;
    sweep->add_option("--clean", w_clean, "Clean image(s); default: one built-in synthetic");
    sweep->add_option("--family", w_family, "motion|gaussian|disk")->capture_default_str();
    sweep->add_option("--params", w_params, "True kernel parameters")->delimiter(',')
        ->capture_default_str();
    sweep->add_option("--bias-param", w_bias_param,
                      "Index of the biased parameter (-1: family default)");
    sweep->add_option("--bias-grid", w_grid, "Bias grid (must include 0; default per family)")
        ->delimiter(',');
    sweep->add_option("--seeds", w_seeds, "Seeds, one sub-run per seed")->delimiter(',')
        ->capture_default_str();
    sweep->add_option("--noise", w_noise, "Noise sigma")->capture_default_str();
    sweep->add_option("--out", w_out, "Output directory")->capture_default_str();
    sweep->add_option("--jobs", w_jobs, "Concurrent sub-runs")->capture_default_str();
    add_solver_flags(sweep, wflags);
    sweep->add_flag("--fixed-timing", w_fixed_timing, "Zero the wall_s CSV column");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Run the prior-ablation matrix");
    std::vector<std::string> a_clean;
    std::string a_family = "gaussian", a_out = "ablate_out";
    std::vector<double> a_params{9, 2}, a_bias;
    std::vector<std::uint64_t> a_seeds{0, 1, 2};
    int a_jobs = 1;
    double a_noise = 0.01;
    SolverFlags aflags;
    ablate->add_option("--clean", a_clean, "Clean image(s); default: one built-in synthetic");
    ablate->add_option("--family", a_family, "motion|gaussian|disk")->capture_default_str();
    ablate->add_option("--params", a_params, "True kernel parameters")->delimiter(',')
        ->capture_default_str();
    ablate->add_option("--bias", a_bias, "Kernel-parameter bias (default: family-typical)")
        ->delimiter(',');
    ablate->add_option("--seeds", a_seeds, "Seeds")->delimiter(',')->capture_default_str();
    ablate->add_option("--noise", a_noise, "Noise sigma")->capture_default_str();
    ablate->add_option("--out", a_out, "Output directory")->capture_default_str();
    ablate->add_option("--jobs", a_jobs, "Concurrent sub-runs")->capture_default_str();
    add_solver_flags(ablate, aflags);

    // metrics
    auto* metrics = app.add_subcommand("metrics", "PSNR/SSIM/MSE between two images");
    std::string m_ref, m_est;
    bool m_unclamped = false;
    metrics->add_option("--ref", m_ref, "Reference image")->required();
    metrics->add_option("--est", m_est, "Estimate image")->required();
    metrics->add_flag("--unclamped", m_unclamped, "Print unclamped MSE only (signed fields)");

    // synth
    auto* synth = app.add_subcommand("synth", "Write a deterministic synthetic clean image");
    std::string y_out = "clean.png";
    int y_size = 128, y_width = 0, y_channels = 1;
    std::uint64_t y_seed = 0;
    synth->add_option("--out", y_out, "Output path")->capture_default_str();
    synth->add_option("--size", y_size, "Height (and width unless --width)")->capture_default_str();
    synth->add_option("--width", y_width, "Width override");
    synth->add_option("--seed", y_seed, "Content seed")->capture_default_str();
    synth->add_option("--channels", y_channels, "1 or 3")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*deblur) {
            if (!config_path.empty()) {
                // file values fill in whatever was not given on the command line
                const auto kv = load_flat_config(config_path);
                auto fill_s = [&](const char* flag, const char* key, std::string& dst) {
                    if (deblur->count(flag) == 0 && kv.count(key)) dst = kv.at(key);
                };
                auto fill_d = [&](const char* flag, const char* key, double& dst) {
                    if (deblur->count(flag) == 0 && kv.count(key)) dst = std::stod(kv.at(key));
                };
                fill_s("--blurry", "blurry", blurry);
                fill_s("--kernel", "kernel", kernel);
                fill_s("--truth", "truth", truth);
                fill_s("--true-kernel", "true-kernel", true_kernel);
                fill_s("--out", "out", outdir);
                fill_s("--ablation", "ablation", ablation);
                fill_s("--save-state", "save-state", save_state);
                fill_s("--resume", "resume", resume);
                if (deblur->count("--seed") == 0 && kv.count("seed"))
                    dflags.seed = std::stoull(kv.at("seed"));
                if (deblur->count("--iters") == 0 && kv.count("iters"))
                    dflags.iters = std::stoi(kv.at("iters"));
                fill_d("--lambda1", "lambda1", dflags.lambda1);
                fill_d("--lambda2", "lambda2", dflags.lambda2);
                fill_d("--lambda3", "lambda3", dflags.lambda3);
                fill_d("--lr-image", "lr-image", dflags.lr_image);
                fill_d("--lr-residual", "lr-residual", dflags.lr_residual);
                fill_d("--prox-L", "prox-L", dflags.prox_L);
                if (deblur->count("--trace") == 0 && kv.count("trace"))
                    trace = kv.at("trace") == "true" || kv.at("trace") == "1";
            }
            if (blurry.empty() || kernel.empty()) {
                std::fprintf(stderr, "deblur: --blurry and --kernel are required\n");
                return 1;
            }
            return cmd_deblur(blurry, kernel, truth, true_kernel, outdir, dflags, ablation, trace,
                              save_state, resume, fixed_timing);
        }
        if (*simulate)
            return cmd_simulate(s_clean, s_family, s_params, s_bias, s_noise, s_seed, s_out);
        if (*sweep)
            return cmd_sweep(w_clean, w_family, w_params, w_bias_param, w_grid, w_seeds, w_noise,
                             w_out, w_jobs, wflags, w_fixed_timing);
        if (*ablate)
            return cmd_ablate(a_clean, a_family, a_params, a_bias, a_seeds, a_noise, a_out, a_jobs,
                              aflags);
        if (*metrics) return cmd_metrics(m_ref, m_est, m_unclamped);
        if (*synth) return cmd_synth(y_out, y_size, y_width, y_seed, y_channels);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
