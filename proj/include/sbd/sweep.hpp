#pragma once

#include <atomic>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "sbd/degradation.hpp"
#include "sbd/harness.hpp"
#include "sbd/plot.hpp"
#include "sbd/solver.hpp"

// Experiment recipes: the kernel-parameter-bias robustness sweep and the
// prior-ablation matrix. Sub-runs are independent solver instances and may
// execute concurrently; result rows are ordered by enumeration index, never
// by completion order.

namespace sbd {

inline int default_bias_param(const KernelSpec& spec) {
    switch (spec.family) {
        case KernelFamily::Motion: return 1;   // orientation
        case KernelFamily::Gaussian: return 1; // sigma
        case KernelFamily::Disk: return 0;     // radius
    }
    fail("unknown kernel family");
}

struct SweepSpec {
    KernelSpec kernel_true;
    int bias_param = -1;              // -1: family default
    std::vector<double> bias_grid;    // must include the 0 anchor
    std::vector<std::uint64_t> seeds;
    double noise_sigma = 0.01;
    SolverConfig solver;              // per-run overrides (seed is replaced per run)
    int jobs = 1;

    void validate() const {
        require(!bias_grid.empty(), "sweep: empty bias grid");
        bool has_zero = false;
        for (double b : bias_grid) has_zero = has_zero || b == 0.0;
        require(has_zero, "sweep: bias grid must include 0");
        require(!seeds.empty(), "sweep: need at least one seed");
        require(jobs >= 1, "sweep: jobs must be >= 1");
    }
};

struct SweepRow {
    std::string family;
    double bias = 0.0;
    std::string image;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double psnr = 0, ssim = 0, rmse_residual = 0, wall_s = 0;
};

namespace detail {

template <class Fn>
void run_indexed(int count, int jobs, Fn fn) {
    if (jobs <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int workers = std::min(jobs, count);
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t)
        pool.emplace_back([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= count) return;
                fn(i);
            }
        });
    for (auto& th : pool) th.join();
}

} // namespace detail

inline std::vector<SweepRow> run_sweep(const SweepSpec& spec,
                                       const std::vector<std::pair<std::string, Image>>& images) {
    spec.validate();
    require(!images.empty(), "sweep: no images");
    const int pidx = spec.bias_param < 0 ? default_bias_param(spec.kernel_true) : spec.bias_param;
    require(pidx >= 0 && pidx < static_cast<int>(spec.kernel_true.arity()),
            "sweep: bias parameter index out of range");
    const Kernel k_true = realize(spec.kernel_true);

    struct Combo {
        std::size_t img;
        std::size_t bias;
        std::size_t seed;
    };
    std::vector<Combo> combos;
    for (std::size_t i = 0; i < images.size(); ++i)
        for (std::size_t b = 0; b < spec.bias_grid.size(); ++b)
            for (std::size_t s = 0; s < spec.seeds.size(); ++s) combos.push_back({i, b, s});

    std::vector<SweepRow> rows(combos.size());
    detail::run_indexed(static_cast<int>(combos.size()), spec.jobs, [&](int idx) {
        const Combo& cb = combos[static_cast<std::size_t>(idx)];
        SweepRow& row = rows[static_cast<std::size_t>(idx)];
        row.family = family_name(spec.kernel_true.family);
        row.bias = spec.bias_grid[cb.bias];
        row.image = images[cb.img].first;
        row.seed = spec.seeds[cb.seed];
        try {
            std::vector<double> bias(spec.kernel_true.arity(), 0.0);
            bias[static_cast<std::size_t>(pidx)] = row.bias;
            const Kernel k_hat = realize(spec.kernel_true, bias);
            const Image& x = images[cb.img].second;
            // same (image, seed) share the measurement; bias only moves k_hat
            const Image y = simulate_blur(x, k_true, spec.noise_sigma,
                                          mix_seed(row.seed, 1000 + cb.img));
            SolverConfig cfg = spec.solver;
            cfg.seed = row.seed;
            const DeblurOutcome out = deblur_run(y, k_hat, cfg, &x, &k_true);
            row.psnr = *out.psnr_x;
            row.ssim = *out.ssim_x;
            row.rmse_residual = std::sqrt(*out.residual_mse);
            row.wall_s = out.wall_seconds;
            row.ok = true;
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
    });
    return rows;
}

inline void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows,
                            bool fixed_timing = false) {
    std::ofstream f(path);
    require(f.good(), "cannot write sweep csv: " + path);
    f << "family,bias,image,seed,psnr,ssim,rmse_residual,wall_s\n";
    char buf[256];
    for (const auto& r : rows) {
        if (!r.ok) continue;
        std::snprintf(buf, sizeof buf, "%s,%.6g,%s,%llu,%.6f,%.8f,%.8e,%.3f\n", r.family.c_str(),
                      r.bias, r.image.c_str(), static_cast<unsigned long long>(r.seed), r.psnr,
                      r.ssim, r.rmse_residual, fixed_timing ? 0.0 : r.wall_s);
        f << buf;
    }
    require(f.good(), "write failed: " + path);
}

inline void write_sweep_failures(const std::string& path, const std::vector<SweepRow>& rows) {
    std::vector<const SweepRow*> failed;
    for (const auto& r : rows)
        if (!r.ok) failed.push_back(&r);
    if (failed.empty()) return;
    std::ofstream f(path);
    for (const auto* r : failed)
        f << r->family << " bias=" << r->bias << " image=" << r->image << " seed=" << r->seed
          << " error: " << r->error << "\n";
}

// mean metric per bias point, over images and seeds
inline std::map<double, std::pair<double, double>> sweep_bias_means(
    const std::vector<SweepRow>& rows) {
    std::map<double, std::pair<double, int>> psnr_acc;
    std::map<double, double> ssim_acc;
    for (const auto& r : rows) {
        if (!r.ok) continue;
        auto& pa = psnr_acc[r.bias];
        pa.first += r.psnr;
        pa.second += 1;
        ssim_acc[r.bias] += r.ssim;
    }
    std::map<double, std::pair<double, double>> out;
    for (const auto& [bias, pa] : psnr_acc)
        out[bias] = {pa.first / pa.second, ssim_acc[bias] / pa.second};
    return out;
}

inline void write_sweep_plots(const std::string& dir, const std::vector<SweepRow>& rows) {
    const auto means = sweep_bias_means(rows);
    if (means.empty()) return;
    PlotSeries ps, ss;
    ss.red = 0.75;
    ss.green = 0.2;
    ss.blue = 0.1;
    for (const auto& [bias, m] : means) {
        ps.x.push_back(bias);
        ps.y.push_back(m.first);
        ss.x.push_back(bias);
        ss.y.push_back(m.second);
    }
    render_line_plot(dir + "/psnr_vs_bias.png", {ps});
    render_line_plot(dir + "/ssim_vs_bias.png", {ss});
}

// --- ablation matrix ---

struct AblateSpec {
    KernelSpec kernel_true;
    std::vector<double> kernel_bias; // defines the one inaccurate-kernel scenario
    std::vector<std::uint64_t> seeds;
    double noise_sigma = 0.01;
    SolverConfig solver;
    int jobs = 1;
};

struct AblateRow {
    AblationMode mode = AblationMode::Full;
    double mean_psnr = 0, mean_ssim = 0;
    int runs = 0, failures = 0;
};

inline const std::vector<AblationMode>& all_ablation_modes() {
    static const std::vector<AblationMode> modes = {
        AblationMode::Full,      AblationMode::NoRSparsity, AblationMode::NoVSparsity,
        AblationMode::NoTv,      AblationMode::NoDip,       AblationMode::NoDrp,
        AblationMode::NoRTerm};
    return modes;
}

struct AblateRunRow {
    AblationMode mode;
    std::string image;
    std::uint64_t seed;
    bool ok;
    std::string error;
    double psnr, ssim;
};

inline std::vector<AblateRunRow> run_ablate_matrix(
    const AblateSpec& spec, const std::vector<std::pair<std::string, Image>>& images) {
    require(!images.empty(), "ablate: no images");
    require(!spec.seeds.empty(), "ablate: need at least one seed");
    const Kernel k_true = realize(spec.kernel_true);
    const Kernel k_hat = realize(spec.kernel_true, spec.kernel_bias);
    const auto& modes = all_ablation_modes();

    struct Combo {
        std::size_t mode, img, seed;
    };
    std::vector<Combo> combos;
    for (std::size_t m = 0; m < modes.size(); ++m)
        for (std::size_t i = 0; i < images.size(); ++i)
            for (std::size_t s = 0; s < spec.seeds.size(); ++s) combos.push_back({m, i, s});

    std::vector<AblateRunRow> rows(combos.size());
    detail::run_indexed(static_cast<int>(combos.size()), spec.jobs, [&](int idx) {
        const Combo& cb = combos[static_cast<std::size_t>(idx)];
        AblateRunRow& row = rows[static_cast<std::size_t>(idx)];
        row.mode = modes[cb.mode];
        row.image = images[cb.img].first;
        row.seed = spec.seeds[cb.seed];
        try {
            const Image& x = images[cb.img].second;
            const Image y = simulate_blur(x, k_true, spec.noise_sigma,
                                          mix_seed(row.seed, 1000 + cb.img));
            SolverConfig cfg = spec.solver;
            cfg.seed = row.seed;
            cfg.ablation = row.mode;
            const DeblurOutcome out = deblur_run(y, k_hat, cfg, &x, &k_true);
            row.psnr = *out.psnr_x;
            row.ssim = *out.ssim_x;
            row.ok = true;
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
    });
    return rows;
}

inline std::vector<AblateRow> ablate_aggregate(const std::vector<AblateRunRow>& runs) {
    std::vector<AblateRow> out;
    for (AblationMode m : all_ablation_modes()) {
        AblateRow row;
        row.mode = m;
        for (const auto& r : runs) {
            if (r.mode != m) continue;
            if (r.ok) {
                row.mean_psnr += r.psnr;
                row.mean_ssim += r.ssim;
                row.runs += 1;
            } else {
                row.failures += 1;
            }
        }
        if (row.runs > 0) {
            row.mean_psnr /= row.runs;
            row.mean_ssim /= row.runs;
        }
        out.push_back(row);
    }
    return out;
}

inline void write_ablate_csv(const std::string& path, const std::vector<AblateRow>& rows) {
    std::ofstream f(path);
    require(f.good(), "cannot write ablate csv: " + path);
    f << "mode,mean_psnr,mean_ssim,baseline\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%.6f,%.8f,%d\n", ablation_name(r.mode).c_str(),
                      r.mean_psnr, r.mean_ssim, r.mode == AblationMode::Full ? 1 : 0);
        f << buf;
    }
    require(f.good(), "write failed: " + path);
}

inline void write_ablate_runs_csv(const std::string& path, const std::vector<AblateRunRow>& runs,
                                  bool fixed_timing = false) {
    (void)fixed_timing;
    std::ofstream f(path);
    require(f.good(), "cannot write ablate runs csv: " + path);
    f << "mode,image,seed,ok,psnr,ssim,error\n";
    char buf[320];
    for (const auto& r : runs) {
        std::snprintf(buf, sizeof buf, "%s,%s,%llu,%d,%.6f,%.8f,%s\n",
                      ablation_name(r.mode).c_str(), r.image.c_str(),
                      static_cast<unsigned long long>(r.seed), r.ok ? 1 : 0, r.ok ? r.psnr : 0.0,
                      r.ok ? r.ssim : 0.0, r.ok ? "" : r.error.c_str());
        f << buf;
    }
}

} // namespace sbd
