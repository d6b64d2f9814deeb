#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "sbd/harness.hpp"
#include "sbd/image_io.hpp"
#include "sbd/plot.hpp"
#include "sbd/sweep.hpp"
#include "sbd/synth.hpp"
#include "testutil.hpp"

using namespace sbd;
using sbd::test::max_abs_diff;
using sbd::test::random_image;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / fs::path("sbd_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

} // namespace

TEST_CASE("png round trip stays within half a quantization step") {
    TempDir tmp;
    Image im = random_image(1, 13, 17, 5);
    save_image(im, tmp.file("a.png"));
    Image back = load_image(tmp.file("a.png"));
    CHECK(max_abs_diff(im, back) <= 1.0 / 510 + 1e-12);

    Image half(3, 8, 8, 0.5);
    save_image(half, tmp.file("b.png"));
    Image hb = load_image(tmp.file("b.png"));
    CHECK(max_abs_diff(half, hb) <= 1.0 / 510 + 1e-12);
}

TEST_CASE("pgm and ppm round trips") {
    TempDir tmp;
    Image g = random_image(1, 9, 11, 6);
    save_image(g, tmp.file("g.pgm"));
    CHECK(max_abs_diff(g, load_image(tmp.file("g.pgm"))) <= 1.0 / 510 + 1e-12);

    Image c = random_image(3, 9, 11, 7);
    save_image(c, tmp.file("c.ppm"));
    CHECK(max_abs_diff(c, load_image(tmp.file("c.ppm"))) <= 1.0 / 510 + 1e-12);
}

TEST_CASE("16-bit PGM samples map to [0,1] by value over max") {
    TempDir tmp;
    std::ofstream f(tmp.file("hi.pgm"), std::ios::binary);
    f << "P5\n2 1\n65535\n";
    const unsigned char bytes[] = {0xFF, 0xFF, 0x00, 0x00}; // big-endian 65535, 0
    f.write(reinterpret_cast<const char*>(bytes), 4);
    f.close();
    Image im = load_image(tmp.file("hi.pgm"));
    CHECK(im.at(0, 0, 0) == 1.0);
    CHECK(im.at(0, 0, 1) == 0.0);
}

TEST_CASE("save clamps out-of-range values") {
    TempDir tmp;
    Image im(1, 4, 4, 0.0);
    im.at(0, 0, 0) = 1.7;
    im.at(0, 0, 1) = -0.3;
    save_image(im, tmp.file("x.png"));
    Image back = load_image(tmp.file("x.png"));
    CHECK(back.at(0, 0, 0) == 1.0);
    CHECK(back.at(0, 0, 1) == 0.0);
}

TEST_CASE("unreadable or unsupported image files are errors") {
    TempDir tmp;
    CHECK_THROWS_AS(load_image(tmp.file("missing.png")), Error);
    std::ofstream(tmp.file("junk.dat")) << "not an image";
    CHECK_THROWS_AS(load_image(tmp.file("junk.dat")), Error);
    Image im(1, 4, 4, 0.5);
    CHECK_THROWS_AS(save_image(im, tmp.file("x.bmp")), Error);
}

TEST_CASE("kernel text format round trip") {
    TempDir tmp;
    std::ofstream(tmp.file("delta.txt")) << "1 1\n1.0\n";
    Kernel d = load_kernel(tmp.file("delta.txt"));
    CHECK(d.height == 1);
    CHECK(d.w[0] == 1.0);

    Kernel g = make_gaussian_kernel(5, 1.0);
    save_kernel(g, tmp.file("g.txt"));
    Kernel back = load_kernel(tmp.file("g.txt"));
    REQUIRE(back.height == 5);
    CHECK(max_abs_diff(back.w, g.w) < 1e-9);
}

TEST_CASE("kernel loader rejects bad files") {
    TempDir tmp;
    std::ofstream(tmp.file("sum.txt")) << "1 1\n0.9\n";
    CHECK_THROWS_AS(load_kernel(tmp.file("sum.txt")), Error);
    std::ofstream(tmp.file("neg.txt")) << "1 3\n0.5 -0.1 0.6\n";
    CHECK_THROWS_AS(load_kernel(tmp.file("neg.txt")), Error);
    std::ofstream(tmp.file("even.txt")) << "2 2\n0.25 0.25\n0.25 0.25\n";
    CHECK_THROWS_AS(load_kernel(tmp.file("even.txt")), Error);
    std::ofstream(tmp.file("head.txt")) << "0 3\n";
    CHECK_THROWS_AS(load_kernel(tmp.file("head.txt")), Error);
}

TEST_CASE("kernel loader renormalizes small drift exactly to one") {
    TempDir tmp;
    std::ofstream(tmp.file("drift.txt")) << "1 3\n0.2500001 0.5 0.25\n";
    Kernel k = load_kernel(tmp.file("drift.txt"));
    CHECK(k.sum() == 1.0);
}

TEST_CASE("pad_to_divisible pads right/bottom by reflection and crops back") {
    Image im = random_image(1, 60, 61, 8);
    auto [padded, rec] = pad_to_divisible(im, 16);
    CHECK(padded.height == 64);
    CHECK(padded.width == 64);
    CHECK(rec.height == 60);
    CHECK(rec.width == 61);
    // symmetric reflection: row 60 mirrors row 59, row 63 mirrors row 56
    for (int x = 0; x < 61; ++x) {
        CHECK(padded.at(0, 60, x) == im.at(0, 59, x));
        CHECK(padded.at(0, 63, x) == im.at(0, 56, x));
    }
    Image back = crop_to(padded, rec);
    CHECK(back.pix == im.pix);

    Image same = random_image(1, 32, 32, 9);
    auto [p2, r2] = pad_to_divisible(same, 16);
    CHECK(p2.pix == same.pix);
    CHECK(crop_to(p2, r2).pix == same.pix);
}

TEST_CASE("metrics after pad+crop match the unpadded instance") {
    Image truth = random_image(1, 30, 30, 10);
    Image est = random_image(1, 30, 30, 11);
    auto [padded, rec] = pad_to_divisible(est, 16);
    Image back = crop_to(padded, rec);
    CHECK(psnr(truth, back) == psnr(truth, est));
    CHECK(ssim(truth, back) == ssim(truth, est));
}

TEST_CASE("visualize_signed maps [-m, m] onto [0,1] around one half") {
    Image r(1, 4, 4, 0.0);
    r.at(0, 0, 0) = 0.2;
    r.at(0, 1, 1) = -0.2;
    r.at(0, 2, 2) = 0.1;
    Image vis;
    const double m = visualize_signed(r, vis);
    CHECK(m == Catch::Approx(0.2));
    CHECK(vis.at(0, 0, 0) == Catch::Approx(1.0));
    CHECK(vis.at(0, 1, 1) == Catch::Approx(0.0));
    CHECK(vis.at(0, 3, 3) == Catch::Approx(0.5));

    Image zero(1, 4, 4, 0.0);
    CHECK(visualize_signed(zero, vis) == 0.0);
    for (double v : vis.pix) CHECK(v == 0.5);
}

TEST_CASE("deblur_run computes metrics only when the truth is available") {
    Image x = synth_image(32, 32, 12);
    Kernel k = make_gaussian_kernel(5, 1.0);
    Image y = simulate_blur(x, k, 0.01, 13);
    SolverConfig cfg;
    cfg.iterations = 2;
    cfg.seed = 3;
    cfg.net.depth = 2;
    cfg.net.encoder_channels = {4, 8};
    cfg.net.skip_channels = {2, 2};
    cfg.net.input_channels = 4;
    cfg.residual_net = cfg.net;
    cfg.residual_net.use_norm = false;

    DeblurOutcome plain = deblur_run(y, k, cfg);
    CHECK(!plain.psnr_x.has_value());
    CHECK(!plain.residual_mse.has_value());

    DeblurOutcome with_truth = deblur_run(y, k, cfg, &x);
    CHECK(with_truth.psnr_x.has_value());
    CHECK(!with_truth.residual_mse.has_value()); // needs the true kernel too

    Kernel k_hat = make_gaussian_kernel(5, 1.3);
    DeblurOutcome full = deblur_run(y, k_hat, cfg, &x, &k);
    CHECK(full.psnr_x.has_value());
    CHECK(full.residual_mse.has_value());
    CHECK(full.residual_zero_mse.has_value());
    CHECK(full.x_hat.height == 32);
}

TEST_CASE("deblur_run pads indivisible inputs and crops the outputs") {
    Image x = synth_image(30, 30, 14);
    Kernel k = make_gaussian_kernel(3, 0.8);
    Image y = simulate_blur(x, k, 0.01, 15);
    SolverConfig cfg;
    cfg.iterations = 1;
    cfg.net.depth = 2;
    cfg.net.encoder_channels = {4, 8};
    cfg.net.skip_channels = {2, 2};
    cfg.net.input_channels = 4;
    cfg.residual_net = cfg.net;
    cfg.residual_net.use_norm = false;
    DeblurOutcome out = deblur_run(y, k, cfg, &x);
    CHECK(out.x_hat.height == 30);
    CHECK(out.x_hat.width == 30);
}

TEST_CASE("loss csv has the documented header and one row per iteration") {
    TempDir tmp;
    std::vector<LossRecord> trace(3);
    for (int i = 0; i < 3; ++i) {
        trace[static_cast<std::size_t>(i)].iter = i;
        trace[static_cast<std::size_t>(i)].total = i * 1.5;
    }
    write_loss_csv(tmp.file("loss.csv"), trace);
    std::ifstream f(tmp.file("loss.csv"));
    std::string line;
    std::getline(f, line);
    CHECK(line == "iter,data,tv,r_l1,v_l1,total");
    int rows = 0;
    while (std::getline(f, line)) rows += !line.empty();
    CHECK(rows == 3);
}

TEST_CASE("sweep produces one CSV row per combination and the plots") {
    TempDir tmp;
    SweepSpec spec;
    spec.kernel_true = KernelSpec::gaussian(5, 1.0);
    spec.bias_grid = {-0.3, 0.0, 0.3};
    spec.seeds = {1, 2};
    spec.noise_sigma = 0.01;
    spec.solver.iterations = 1;
    spec.solver.net.depth = 2;
    spec.solver.net.encoder_channels = {4, 8};
    spec.solver.net.skip_channels = {2, 2};
    spec.solver.net.input_channels = 4;
    spec.solver.residual_net = spec.solver.net;
    spec.solver.residual_net.use_norm = false;

    std::vector<std::pair<std::string, Image>> images;
    images.emplace_back("synth_a", synth_image(32, 32, 16));
    auto rows = run_sweep(spec, images);
    REQUIRE(rows.size() == 6);
    for (const auto& r : rows) CHECK(r.ok);

    write_sweep_csv(tmp.file("sweep.csv"), rows);
    std::ifstream f(tmp.file("sweep.csv"));
    std::string line;
    std::getline(f, line);
    CHECK(line == "family,bias,image,seed,psnr,ssim,rmse_residual,wall_s");
    int n = 0;
    while (std::getline(f, line)) n += !line.empty();
    CHECK(n == 6);

    write_sweep_plots(tmp.path.string(), rows);
    Image plot = load_image(tmp.file("psnr_vs_bias.png"));
    CHECK(plot.channels == 3);
    CHECK(fs::exists(tmp.file("ssim_vs_bias.png")));
}

TEST_CASE("sweep rejects a bias grid without the zero anchor") {
    SweepSpec spec;
    spec.kernel_true = KernelSpec::gaussian(5, 1.0);
    spec.bias_grid = {0.5, 1.0};
    spec.seeds = {1};
    CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("sweep records failed sub-runs and keeps going") {
    TempDir tmp;
    SweepSpec spec;
    spec.kernel_true = KernelSpec::disk(1.0);
    spec.bias_grid = {-5.0, 0.0}; // -5 bias gives an invalid (negative) radius
    spec.seeds = {1};
    spec.solver.iterations = 1;
    spec.solver.net.depth = 2;
    spec.solver.net.encoder_channels = {4, 8};
    spec.solver.net.skip_channels = {2, 2};
    spec.solver.net.input_channels = 4;
    spec.solver.residual_net = spec.solver.net;
    spec.solver.residual_net.use_norm = false;
    std::vector<std::pair<std::string, Image>> images;
    images.emplace_back("synth_a", synth_image(32, 32, 17));
    auto rows = run_sweep(spec, images);
    REQUIRE(rows.size() == 2);
    CHECK(!rows[0].ok);
    CHECK(rows[1].ok);
    write_sweep_csv(tmp.file("s.csv"), rows);
    write_sweep_failures(tmp.file("fail.log"), rows);
    CHECK(fs::exists(tmp.file("fail.log")));
    std::ifstream f(tmp.file("s.csv"));
    std::string line;
    int n = 0;
    while (std::getline(f, line)) n += !line.empty();
    CHECK(n == 2); // header + the one successful row
}

TEST_CASE("sweep rows are identical regardless of the job count") {
    SweepSpec spec;
    spec.kernel_true = KernelSpec::gaussian(3, 0.8);
    spec.bias_grid = {0.0, 0.4};
    spec.seeds = {1, 2};
    spec.noise_sigma = 0.01;
    spec.solver.iterations = 1;
    spec.solver.net.depth = 2;
    spec.solver.net.encoder_channels = {4, 8};
    spec.solver.net.skip_channels = {2, 2};
    spec.solver.net.input_channels = 4;
    spec.solver.residual_net = spec.solver.net;
    spec.solver.residual_net.use_norm = false;
    std::vector<std::pair<std::string, Image>> images;
    images.emplace_back("synth_a", synth_image(32, 32, 18));

    auto serial = run_sweep(spec, images);
    spec.jobs = 3;
    auto parallel = run_sweep(spec, images);
    REQUIRE(serial.size() == parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
        CHECK(serial[i].bias == parallel[i].bias);
        CHECK(serial[i].seed == parallel[i].seed);
        CHECK(serial[i].psnr == parallel[i].psnr);
        CHECK(serial[i].ssim == parallel[i].ssim);
    }
}

TEST_CASE("ablate emits exactly one aggregate row per mode, baseline flagged") {
    TempDir tmp;
    AblateSpec spec;
    spec.kernel_true = KernelSpec::gaussian(3, 0.8);
    spec.kernel_bias = {0, 0.3};
    spec.seeds = {1};
    spec.solver.iterations = 1;
    spec.solver.net.depth = 2;
    spec.solver.net.encoder_channels = {4, 8};
    spec.solver.net.skip_channels = {2, 2};
    spec.solver.net.input_channels = 4;
    spec.solver.residual_net = spec.solver.net;
    spec.solver.residual_net.use_norm = false;
    std::vector<std::pair<std::string, Image>> images;
    images.emplace_back("synth_a", synth_image(32, 32, 19));

    auto runs = run_ablate_matrix(spec, images);
    REQUIRE(runs.size() == 7);
    auto rows = ablate_aggregate(runs);
    REQUIRE(rows.size() == 7);
    write_ablate_csv(tmp.file("ablate.csv"), rows);

    std::ifstream f(tmp.file("ablate.csv"));
    std::string line;
    std::getline(f, line);
    CHECK(line == "mode,mean_psnr,mean_ssim,baseline");
    int n = 0, baselines = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        ++n;
        if (line.rfind("full,", 0) == 0) {
            CHECK(line.back() == '1');
            ++baselines;
        }
    }
    CHECK(n == 7);
    CHECK(baselines == 1);
}

TEST_CASE("line plot renderer writes a decodable image with axes") {
    TempDir tmp;
    PlotSeries s;
    s.x = {0, 1, 2, 3};
    s.y = {1.0, 0.5, 0.8, 0.2};
    render_line_plot(tmp.file("p.png"), {s});
    Image im = load_image(tmp.file("p.png"));
    CHECK(im.channels == 3);
    CHECK(im.width == 640);
    // some non-white pixels exist (axes / polyline)
    int dark = 0;
    for (double v : im.pix) dark += v < 0.5;
    CHECK(dark > 100);
}
