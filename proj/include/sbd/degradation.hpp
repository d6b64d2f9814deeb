#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "sbd/common.hpp"
#include "sbd/image.hpp"
#include "sbd/kernel.hpp"
#include "sbd/signal.hpp"

// Ground-truth simulation: PSF construction for the motion/gaussian/disk
// families, controlled parameter bias, blur + noise synthesis, and the true
// residual used for evaluating residual estimates.

namespace sbd {

inline int smallest_odd_geq(double v) {
    int n = static_cast<int>(std::ceil(v));
    if (n < 1) n = 1;
    return n % 2 == 1 ? n : n + 1;
}

// Line PSF of the given length (pixels) and orientation, rasterized by
// sub-pixel bilinear accumulation along the segment through the kernel
// center. Side length is the smallest odd integer >= length.
inline Kernel make_motion_kernel(double length, double angle_degrees) {
    require(length >= 1.0, "make_motion_kernel: length must be >= 1");
    const int side = smallest_odd_geq(length);
    Kernel k(side, side);
    const double c = (side - 1) / 2.0;
    const double rad = angle_degrees * std::numbers::pi / 180.0;
    const double dx = std::cos(rad), dy = std::sin(rad);
    const double half = (length - 1.0) / 2.0;
    const int samples = std::max(1, static_cast<int>(std::ceil(length * 64.0)));
    const double wsp = 1.0 / samples;
    for (int s = 0; s < samples; ++s) {
        // midpoints of `samples` equal slices of [-half, half]
        const double t = samples == 1 ? 0.0 : -half + (s + 0.5) * (2.0 * half / samples);
        const double px = c + t * dx;
        const double py = c + t * dy;
        const int x0 = static_cast<int>(std::floor(px));
        const int y0 = static_cast<int>(std::floor(py));
        const double fx = px - x0, fy = py - y0;
        for (int oy = 0; oy <= 1; ++oy)
            for (int ox = 0; ox <= 1; ++ox) {
                const int xx = x0 + ox, yy = y0 + oy;
                if (xx < 0 || xx >= side || yy < 0 || yy >= side) continue;
                const double wgt = (ox ? fx : 1.0 - fx) * (oy ? fy : 1.0 - fy);
                k.at(yy, xx) += wsp * wgt;
            }
    }
    k.normalize();
    return k;
}

// Truncated isotropic Gaussian. Even sizes are promoted to the next odd size
// (a PSF needs a center pixel).
inline Kernel make_gaussian_kernel(int size, double sigma) {
    require(sigma > 0.0, "make_gaussian_kernel: sigma must be positive");
    if (size % 2 == 0) size += 1;
    require(size >= 3, "make_gaussian_kernel: size must be >= 3 after odd adjustment");
    Kernel k(size, size);
    const int c = size / 2;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double r2 = (y - c) * static_cast<double>(y - c) +
                              (x - c) * static_cast<double>(x - c);
            k.at(y, x) = std::exp(-r2 / (2.0 * sigma * sigma));
        }
    k.normalize();
    return k;
}

// Disk indicator with 4x4 sub-pixel area anti-aliasing at the rim. Side is
// the smallest odd integer >= 2r + 1.
inline Kernel make_disk_kernel(double radius) {
    require(radius > 0.0, "make_disk_kernel: radius must be positive");
    const int side = smallest_odd_geq(2.0 * radius + 1.0);
    Kernel k(side, side);
    const double c = (side - 1) / 2.0;
    const double r2 = radius * radius;
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            int inside = 0;
            for (int sy = 0; sy < 4; ++sy)
                for (int sx = 0; sx < 4; ++sx) {
                    const double py = y - c + (2.0 * sy - 3.0) / 8.0;
                    const double px = x - c + (2.0 * sx - 3.0) / 8.0;
                    if (py * py + px * px <= r2) ++inside;
                }
            k.at(y, x) = inside / 16.0;
        }
    require(k.sum() > 0.0, "make_disk_kernel: empty support");
    k.normalize();
    return k;
}

enum class KernelFamily { Motion, Gaussian, Disk };

inline std::string family_name(KernelFamily f) {
    switch (f) {
        case KernelFamily::Motion: return "motion";
        case KernelFamily::Gaussian: return "gaussian";
        case KernelFamily::Disk: return "disk";
    }
    fail("unknown kernel family");
}

inline KernelFamily family_from_name(const std::string& s) {
    if (s == "motion") return KernelFamily::Motion;
    if (s == "gaussian") return KernelFamily::Gaussian;
    if (s == "disk") return KernelFamily::Disk;
    fail("unknown kernel family: " + s);
}

// Family plus parameters: motion {length_px, angle_deg}, gaussian
// {size_px, sigma}, disk {radius_px}.
struct KernelSpec {
    KernelFamily family = KernelFamily::Gaussian;
    std::vector<double> params;

    static KernelSpec motion(double length, double angle) {
        return {KernelFamily::Motion, {length, angle}};
    }
    static KernelSpec gaussian(double size, double sigma) {
        return {KernelFamily::Gaussian, {size, sigma}};
    }
    static KernelSpec disk(double radius) { return {KernelFamily::Disk, {radius}}; }

    std::size_t arity() const { return family == KernelFamily::Disk ? 1 : 2; }
};

// Realizes a spec with additive per-parameter offsets; zero bias reproduces
// the true kernel exactly.
inline Kernel realize(const KernelSpec& spec, const std::vector<double>& bias = {}) {
    require(spec.params.size() == spec.arity(), "kernel spec: wrong parameter count");
    require(bias.empty() || bias.size() == spec.arity(), "kernel bias: wrong parameter count");
    std::vector<double> p = spec.params;
    for (std::size_t i = 0; i < bias.size(); ++i) p[i] += bias[i];
    switch (spec.family) {
        case KernelFamily::Motion: return make_motion_kernel(p[0], p[1]);
        case KernelFamily::Gaussian: {
            const double sz = std::round(p[0]);
            require(std::abs(sz - p[0]) < 1e-9, "gaussian size must be integral");
            return make_gaussian_kernel(static_cast<int>(sz), p[1]);
        }
        case KernelFamily::Disk: return make_disk_kernel(p[0]);
    }
    fail("unknown kernel family");
}

struct DegradationConfig {
    KernelSpec kernel_true;
    std::vector<double> kernel_bias; // additive offsets defining the inaccurate kernel
    double noise_sigma = 0.01;       // fraction of the [0,1] range
    std::uint64_t seed = 0;
};

// y = k (*) x + n, n iid Gaussian(0, sigma^2), seeded and reproducible.
inline Image simulate_blur(const Image& x, const Kernel& k, double noise_sigma,
                           std::uint64_t seed) {
    require(noise_sigma >= 0.0, "simulate_blur: noise sigma must be nonnegative");
    Image y = conv2d_circular_fft(x, k);
    if (noise_sigma > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> n(0.0, noise_sigma);
        for (double& v : y.pix) v += n(rng);
    }
    check_finite(y, "simulate_blur");
    return y;
}

// r = (k_true - k_hat) (*) x; kernels of different sizes are zero-padded to a
// common odd size with centers aligned.
inline Image true_residual(const Image& x, const Kernel& k_true, const Kernel& k_hat) {
    const int h = std::max(k_true.height, k_hat.height);
    const int w = std::max(k_true.width, k_hat.width);
    const Kernel kt = pad_kernel_to(k_true, h, w);
    const Kernel kh = pad_kernel_to(k_hat, h, w);
    Kernel dk(h, w);
    for (std::size_t i = 0; i < dk.w.size(); ++i) dk.w[i] = kt.w[i] - kh.w[i];
    return conv2d_circular_fft(x, dk);
}

} // namespace sbd
