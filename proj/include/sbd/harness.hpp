#pragma once

#include <chrono>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "sbd/degradation.hpp"
#include "sbd/image.hpp"
#include "sbd/image_io.hpp"
#include "sbd/signal.hpp"
#include "sbd/solver.hpp"

// Glue shared by the CLI commands, the experiment recipes and the acceptance
// suite: padded deblur runs with metrics, signed-field visualization, and the
// loss-trace CSV.

namespace sbd {

struct DeblurOutcome {
    Image x_hat, r_hat, h_hat;            // cropped back to the input size
    std::vector<LossRecord> trace;
    std::optional<double> psnr_x;          // vs ground truth, when available
    std::optional<double> ssim_x;
    std::optional<double> psnr_blurry;     // quality of the input, same truth
    std::optional<double> residual_mse;    // unclamped MSE of r_hat vs true residual
    std::optional<double> residual_zero_mse; // MSE of the all-zero residual baseline
    double wall_seconds = 0.0;
};

// Pads the blurry image to the resolution multiple required by the generator
// depth, runs the solver, crops outputs, and computes metrics against the
// optional ground truth. Residual metrics need both the truth image and the
// true kernel (the true residual is (k_true - k_hat) (*) truth).
inline DeblurOutcome deblur_run(const Image& y, const Kernel& k_hat, const SolverConfig& cfg,
                                const Image* truth = nullptr, const Kernel* k_true = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    const int factor = 1 << cfg.net.depth;
    auto [y_pad, crop] = pad_to_divisible(y, factor);
    SolverResult res = run_solver(y_pad, k_hat, cfg);
    DeblurOutcome out;
    out.x_hat = crop_to(res.x_hat, crop);
    out.r_hat = crop_to(res.r_hat, crop);
    out.h_hat = crop_to(res.h_hat, crop);
    out.trace = std::move(res.trace);
    if (truth) {
        require(truth->same_shape(y), "truth image shape differs from blurry image");
        out.psnr_x = psnr(*truth, out.x_hat);
        out.ssim_x = ssim(*truth, out.x_hat);
        out.psnr_blurry = psnr(*truth, y);
        if (k_true) {
            const Image r_true = true_residual(*truth, *k_true, k_hat);
            out.residual_mse = mean_squared_error(r_true, out.r_hat);
            out.residual_zero_mse =
                mean_squared_error(r_true, Image(y.channels, y.height, y.width, 0.0));
        }
    }
    out.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

// Signed field -> [0,1] image via the symmetric affine map with scale
// m = max|field| (0.5 when the field is identically zero). Returns m.
inline double visualize_signed(const Image& field, Image& vis) {
    double m = 0.0;
    for (double v : field.pix) m = std::max(m, std::abs(v));
    vis = Image(field.channels, field.height, field.width, 0.5);
    if (m > 0.0)
        for (std::size_t i = 0; i < field.pix.size(); ++i)
            vis.pix[i] = 0.5 + field.pix[i] / (2.0 * m);
    return m;
}

inline void write_loss_csv(const std::string& path, const std::vector<LossRecord>& trace) {
    std::ofstream f(path);
    require(f.good(), "cannot write loss csv: " + path);
    f << "iter,data,tv,r_l1,v_l1,total\n";
    char buf[160];
    for (const auto& r : trace) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.iter, r.data, r.tv,
                      r.r_l1, r.v_l1, r.total);
        f << buf;
    }
    require(f.good(), "write failed: " + path);
}

} // namespace sbd
