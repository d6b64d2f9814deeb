#include <catch2/catch_amalgamated.hpp>

#include <numbers>
#include <random>

#include "sbd/degradation.hpp"
#include "testutil.hpp"

using namespace sbd;
using sbd::test::max_abs_diff;
using sbd::test::random_image;

namespace {

void check_psf(const Kernel& k) {
    REQUIRE_NOTHROW(k.validate_psf());
}

double entropy(const Kernel& k) {
    double e = 0.0;
    for (double v : k.w)
        if (v > 0) e -= v * std::log(v);
    return e;
}

} // namespace

TEST_CASE("motion kernel: length 1 is a delta for any angle") {
    for (double ang : {0.0, 17.0, 45.0, 90.0, 133.0}) {
        Kernel k = make_motion_kernel(1.0, ang);
        REQUIRE(k.height == 1);
        CHECK(k.w[0] == Catch::Approx(1.0));
    }
}

TEST_CASE("motion kernel at angle 0 concentrates on the central row") {
    Kernel k = make_motion_kernel(5.0, 0.0);
    REQUIRE(k.height == 5);
    const int c = k.height / 2;
    double row_mass = 0.0;
    for (int x = 0; x < k.width; ++x) row_mass += k.at(c, x);
    CHECK(row_mass == Catch::Approx(1.0).margin(1e-12));
    // symmetric about the center
    for (int x = 0; x < k.width; ++x)
        CHECK(k.at(c, x) == Catch::Approx(k.at(c, k.width - 1 - x)).margin(1e-12));
}

TEST_CASE("motion kernel at 90 degrees is the transpose of angle 0") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ul(1.0, 14.0);
    for (int t = 0; t < 8; ++t) {
        const double len = ul(rng);
        Kernel a = make_motion_kernel(len, 0.0);
        Kernel b = make_motion_kernel(len, 90.0);
        REQUIRE(a.height == b.height);
        double worst = 0.0;
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < a.width; ++x)
                worst = std::max(worst, std::abs(a.at(y, x) - b.at(x, y)));
        CHECK(worst < 1e-12);
    }
}

TEST_CASE("gaussian kernel: tiny sigma is numerically a delta") {
    Kernel k = make_gaussian_kernel(5, 1e-3);
    CHECK(k.at(2, 2) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("gaussian kernel is symmetric under flips and transpose") {
    Kernel k = make_gaussian_kernel(7, 1.7);
    for (int y = 0; y < k.height; ++y)
        for (int x = 0; x < k.width; ++x) {
            CHECK(k.at(y, x) == Catch::Approx(k.at(k.height - 1 - y, x)).margin(1e-15));
            CHECK(k.at(y, x) == Catch::Approx(k.at(y, k.width - 1 - x)).margin(1e-15));
            CHECK(k.at(y, x) == Catch::Approx(k.at(x, y)).margin(1e-15));
        }
}

TEST_CASE("gaussian kernel center weight matches the analytic normalization") {
    Kernel k = make_gaussian_kernel(5, 1.0);
    double z = 0.0;
    for (int y = -2; y <= 2; ++y)
        for (int x = -2; x <= 2; ++x) z += std::exp(-(y * y + x * x) / 2.0);
    CHECK(k.at(2, 2) == Catch::Approx(1.0 / z).epsilon(1e-12));
}

TEST_CASE("gaussian even size is promoted to the next odd size") {
    Kernel k = make_gaussian_kernel(20, 4.0);
    CHECK(k.height == 21);
    CHECK(k.width == 21);
}

TEST_CASE("disk kernel: radius 0.5 collapses to the center pixel") {
    Kernel k = make_disk_kernel(0.5);
    const int c = k.height / 2;
    CHECK(k.at(c, c) == Catch::Approx(1.0));
}

TEST_CASE("disk kernel has exact 4-fold rotational symmetry") {
    Kernel k = make_disk_kernel(3.3);
    const int n = k.height;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            CHECK(k.at(y, x) == Catch::Approx(k.at(x, n - 1 - y)).margin(1e-15));
}

TEST_CASE("disk kernel area approximates pi r^2") {
    // interior pixels carry weight 1/area before normalization, so the
    // unnormalized sum is 1/max-weight
    Kernel k = make_disk_kernel(4.0);
    double wmax = 0.0;
    for (double v : k.w) wmax = std::max(wmax, v);
    const double area = 1.0 / wmax;
    const double expect = std::numbers::pi * 16.0;
    CHECK(std::abs(area - expect) / expect < 0.02);
}

TEST_CASE("every family yields valid PSFs over random parameter draws") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        switch (t % 3) {
            case 0: check_psf(make_motion_kernel(1.0 + 19.0 * u(rng), 360.0 * u(rng))); break;
            case 1:
                check_psf(make_gaussian_kernel(3 + 2 * static_cast<int>(9 * u(rng)),
                                               0.3 + 5.0 * u(rng)));
                break;
            default: check_psf(make_disk_kernel(0.3 + 6.0 * u(rng)));
        }
    }
}

TEST_CASE("realize with zero bias reproduces the family constructor exactly") {
    KernelSpec m = KernelSpec::motion(20, 10);
    CHECK(realize(m, {0, 0}).w == make_motion_kernel(20, 10).w);
    KernelSpec g = KernelSpec::gaussian(20, 4);
    CHECK(realize(g, {0, 0}).w == make_gaussian_kernel(20, 4).w);
    CHECK(realize(g).w == make_gaussian_kernel(20, 4).w);
    KernelSpec d = KernelSpec::disk(4);
    CHECK(realize(d, {0}).w == make_disk_kernel(4).w);
}

TEST_CASE("positive sigma bias increases gaussian entropy") {
    KernelSpec g = KernelSpec::gaussian(20, 4);
    CHECK(entropy(realize(g, {0, 0.5})) > entropy(realize(g)));
}

TEST_CASE("negative radius bias shrinks the disk support") {
    KernelSpec d = KernelSpec::disk(4);
    Kernel small = realize(d, {-1});
    Kernel full = realize(d);
    Kernel sp = pad_kernel_to(small, full.height, full.width);
    for (std::size_t i = 0; i < full.w.size(); ++i)
        if (sp.w[i] > 0.0) CHECK(full.w[i] > 0.0);
    int small_support = 0, full_support = 0;
    for (double v : sp.w) small_support += v > 0;
    for (double v : full.w) full_support += v > 0;
    CHECK(small_support < full_support);
}

TEST_CASE("invalid kernel parameters are rejected") {
    CHECK_THROWS_AS(make_motion_kernel(0.5, 0.0), Error);
    CHECK_THROWS_AS(make_gaussian_kernel(9, 0.0), Error);
    CHECK_THROWS_AS(make_disk_kernel(-1.0), Error);
    CHECK_THROWS_AS(realize(KernelSpec::disk(1.0), {-1.5}), Error);
}

TEST_CASE("simulate_blur: zero noise and delta kernel is the identity") {
    Image x = random_image(1, 16, 16, 3);
    Image y = simulate_blur(x, delta_kernel(1), 0.0, 7);
    CHECK(max_abs_diff(x, y) < 1e-12);
}

TEST_CASE("simulate_blur noise magnitude matches the half-normal mean") {
    Image x = random_image(1, 128, 128, 4, 0.2, 0.8);
    Kernel k = make_gaussian_kernel(5, 1.0);
    Image kx = conv2d_circular_fft(x, k);
    Image y = simulate_blur(x, k, 0.01, 99);
    double mean_abs = 0.0;
    for (std::size_t i = 0; i < y.pix.size(); ++i) mean_abs += std::abs(y.pix[i] - kx.pix[i]);
    mean_abs /= static_cast<double>(y.pix.size());
    const double expect = 0.01 * std::sqrt(2.0 / std::numbers::pi);
    CHECK(std::abs(mean_abs - expect) / expect < 0.05);
}

TEST_CASE("simulate_blur is deterministic per seed and decorrelated across seeds") {
    Image x = random_image(1, 128, 128, 5);
    Kernel k = make_gaussian_kernel(5, 1.2);
    Image y1 = simulate_blur(x, k, 0.02, 42);
    Image y2 = simulate_blur(x, k, 0.02, 42);
    REQUIRE(y1.pix == y2.pix);

    Image y3 = simulate_blur(x, k, 0.02, 43);
    Image kx = conv2d_circular_fft(x, k);
    double c12 = 0, n1 = 0, n2 = 0;
    for (std::size_t i = 0; i < y1.pix.size(); ++i) {
        const double a = y1.pix[i] - kx.pix[i];
        const double b = y3.pix[i] - kx.pix[i];
        c12 += a * b;
        n1 += a * a;
        n2 += b * b;
    }
    CHECK(std::abs(c12) / std::sqrt(n1 * n2) < 0.05);
}

TEST_CASE("true_residual is zero when the kernels agree") {
    Image x = random_image(1, 16, 16, 6);
    Kernel k = make_gaussian_kernel(5, 1.0);
    Image r = true_residual(x, k, k);
    CHECK(max_abs_diff(r, Image(1, 16, 16, 0.0)) < 1e-15);
}

TEST_CASE("true_residual distributes over convolution") {
    Image x = random_image(1, 16, 16, 7);
    Kernel k1 = make_gaussian_kernel(5, 1.0);
    Kernel k2 = make_gaussian_kernel(7, 1.6); // different size: exercises padding
    Image r = true_residual(x, k1, k2);
    Image c1 = conv2d_circular_fft(x, pad_kernel_to(k1, 7, 7));
    Image c2 = conv2d_circular_fft(x, k2);
    double worst = 0.0;
    for (std::size_t i = 0; i < r.pix.size(); ++i)
        worst = std::max(worst, std::abs(r.pix[i] - (c1.pix[i] - c2.pix[i])));
    CHECK(worst < 1e-10);
}

TEST_CASE("true_residual of a constant image sums to zero") {
    Image x(1, 12, 12, 0.6);
    Image r = true_residual(x, make_gaussian_kernel(5, 1.0), make_gaussian_kernel(5, 1.5));
    double s = 0.0;
    for (double v : r.pix) s += v;
    CHECK(std::abs(s) < 1e-9);
}
