#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <vector>

#include "sbd/common.hpp"
#include "sbd/fft.hpp"
#include "sbd/image.hpp"
#include "sbd/kernel.hpp"

// Non-autodiff signal kernels shared by simulation, the sparse-coefficient
// update, and evaluation. Convolution is circular (periodic); the kernel is
// centered, i.e. out(i,j) = sum_{a,b} k(a,b) * img((i-a) mod H, (j-b) mod W)
// with kernel indices a,b running over [-ph..ph] x [-pw..pw].

namespace sbd {

namespace detail {

inline void check_kernel_fits(const Kernel& k, int h, int w, const char* op) {
    require(k.odd_sized(), std::string(op) + ": kernel must be odd-sized");
    require(k.height <= h && k.width <= w, std::string(op) + ": kernel larger than image");
    ensure_finite(k.w, op);
}

// Kernel spectrum on the h x w grid, tap (a,b) placed at ((a mod h),(b mod w)).
inline std::vector<cplx> kernel_spectrum(const Kernel& k, int h, int w) {
    std::vector<cplx> kp(static_cast<std::size_t>(h) * w, cplx(0, 0));
    const int ph = k.height / 2, pw = k.width / 2;
    for (int a = -ph; a <= ph; ++a)
        for (int b = -pw; b <= pw; ++b) {
            const int y = (a % h + h) % h;
            const int x = (b % w + w) % w;
            kp[static_cast<std::size_t>(y) * w + x] += k.at(a + ph, b + pw);
        }
    fft2(kp, h, w, false);
    return kp;
}

inline void circ_conv_plane_fft(const double* in, double* out, int h, int w,
                                const std::vector<cplx>& kspec, bool adjoint) {
    const std::size_t n = static_cast<std::size_t>(h) * w;
    std::vector<cplx> a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = cplx(in[i], 0.0);
    fft2(a, h, w, false);
    if (adjoint)
        for (std::size_t i = 0; i < n; ++i) a[i] *= std::conj(kspec[i]);
    else
        for (std::size_t i = 0; i < n; ++i) a[i] *= kspec[i];
    fft2(a, h, w, true);
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i].real();
}

} // namespace detail

inline Image conv2d_circular_fft(const Image& im, const Kernel& k) {
    detail::check_kernel_fits(k, im.height, im.width, "conv2d_circular_fft");
    auto kspec = detail::kernel_spectrum(k, im.height, im.width);
    Image out(im.channels, im.height, im.width);
    for (int c = 0; c < im.channels; ++c)
        detail::circ_conv_plane_fft(im.plane(c), out.plane(c), im.height, im.width, kspec, false);
    check_finite(out, "conv2d_circular_fft");
    return out;
}

// Direct-summation path, the oracle for the FFT route.
inline Image conv2d_direct(const Image& im, const Kernel& k) {
    detail::check_kernel_fits(k, im.height, im.width, "conv2d_direct");
    const int h = im.height, w = im.width;
    const int ph = k.height / 2, pw = k.width / 2;
    Image out(im.channels, h, w);
    for (int c = 0; c < im.channels; ++c) {
        const double* src = im.plane(c);
        double* dst = out.plane(c);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int a = -ph; a <= ph; ++a) {
                    const int yy = ((y - a) % h + h) % h;
                    for (int b = -pw; b <= pw; ++b) {
                        const int xx = ((x - b) % w + w) % w;
                        acc += k.at(a + ph, b + pw) * src[static_cast<std::size_t>(yy) * w + xx];
                    }
                }
                dst[static_cast<std::size_t>(y) * w + x] = acc;
            }
    }
    check_finite(out, "conv2d_direct");
    return out;
}

// Adjoint of circular convolution (circular correlation):
// <k (*) x, y> == <x, adjoint(y, k)>.
inline Image conv2d_adjoint(const Image& im, const Kernel& k) {
    detail::check_kernel_fits(k, im.height, im.width, "conv2d_adjoint");
    auto kspec = detail::kernel_spectrum(k, im.height, im.width);
    Image out(im.channels, im.height, im.width);
    for (int c = 0; c < im.channels; ++c)
        detail::circ_conv_plane_fft(im.plane(c), out.plane(c), im.height, im.width, kspec, true);
    check_finite(out, "conv2d_adjoint");
    return out;
}

// --- orthonormal type-II DCT, separable ---

namespace detail {

// Cached N x N orthonormal DCT-II matrix; C[k*n + i] = a_k cos(pi (2i+1) k / 2n).
inline const std::vector<double>& dct_matrix(int n) {
    static std::map<int, std::vector<double>> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    std::vector<double> m(static_cast<std::size_t>(n) * n);
    const double a0 = std::sqrt(1.0 / n), ak = std::sqrt(2.0 / n);
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i)
            m[static_cast<std::size_t>(k) * n + i] =
                (k == 0 ? a0 : ak) *
                std::cos(std::numbers::pi * (2.0 * i + 1.0) * k / (2.0 * n));
    return cache.emplace(n, std::move(m)).first->second;
}

// out = A * in  (A is n x n, `in` has n rows of `cols` columns), or A^T * in.
inline void mat_apply_rows(const std::vector<double>& A, bool transpose, const double* in,
                           double* out, int n, int cols) {
    for (int r = 0; r < n; ++r) {
        double* o = out + static_cast<std::size_t>(r) * cols;
        std::fill(o, o + cols, 0.0);
        for (int k = 0; k < n; ++k) {
            const double a = transpose ? A[static_cast<std::size_t>(k) * n + r]
                                       : A[static_cast<std::size_t>(r) * n + k];
            const double* src = in + static_cast<std::size_t>(k) * cols;
            for (int c = 0; c < cols; ++c) o[c] += a * src[c];
        }
    }
}

inline void dct2_plane(const double* in, double* out, int h, int w, bool inverse) {
    const auto& Ch = dct_matrix(h);
    const auto& Cw = dct_matrix(w);
    std::vector<double> tmp(static_cast<std::size_t>(h) * w);
    // rows: for each image row apply Cw (a length-w transform). Treat the
    // plane transposed: first transform along columns with Ch, then rows.
    mat_apply_rows(Ch, inverse, in, tmp.data(), h, w);
    // now transform along x: out^T = Cw * tmp^T  =>  out(y,x) = sum_k Cw[x,k] tmp(y,k)
    for (int y = 0; y < h; ++y) {
        const double* trow = tmp.data() + static_cast<std::size_t>(y) * w;
        double* orow = out + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            if (!inverse) {
                const double* crow = Cw.data() + static_cast<std::size_t>(x) * w;
                for (int k = 0; k < w; ++k) acc += crow[k] * trow[k];
            } else {
                for (int k = 0; k < w; ++k) acc += Cw[static_cast<std::size_t>(k) * w + x] * trow[k];
            }
            orow[x] = acc;
        }
    }
}

} // namespace detail

inline Image dct2(const Image& im) {
    check_finite(im, "dct2 input");
    Image out(im.channels, im.height, im.width);
    for (int c = 0; c < im.channels; ++c)
        detail::dct2_plane(im.plane(c), out.plane(c), im.height, im.width, false);
    return out;
}

inline Image idct2(const Image& coeffs) {
    check_finite(coeffs, "idct2 input");
    Image out(coeffs.channels, coeffs.height, coeffs.width);
    for (int c = 0; c < coeffs.channels; ++c)
        detail::dct2_plane(coeffs.plane(c), out.plane(c), coeffs.height, coeffs.width, true);
    return out;
}

// Anisotropic TV: sum of absolute non-circular forward differences, the last
// column/row difference omitted. Channels are summed.
inline double tv_value(const Image& im) {
    check_finite(im, "tv_value input");
    double tv = 0.0;
    for (int c = 0; c < im.channels; ++c) {
        const double* p = im.plane(c);
        const int h = im.height, w = im.width;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x + 1 < w; ++x)
                tv += std::abs(p[static_cast<std::size_t>(y) * w + x + 1] -
                               p[static_cast<std::size_t>(y) * w + x]);
        for (int y = 0; y + 1 < h; ++y)
            for (int x = 0; x < w; ++x)
                tv += std::abs(p[static_cast<std::size_t>(y + 1) * w + x] -
                               p[static_cast<std::size_t>(y) * w + x]);
    }
    return tv;
}

// Soft-thresholding, the proximal operator of delta*||.||_1.
inline double soft_threshold(double a, double delta) {
    require(delta >= 0.0, "soft_threshold: delta must be nonnegative");
    const double m = std::abs(a) - delta;
    return m > 0.0 ? (a > 0.0 ? m : -m) : 0.0;
}

inline Image soft_threshold(const Image& a, double delta) {
    require(delta >= 0.0, "soft_threshold: delta must be nonnegative");
    Image out = a;
    for (double& v : out.pix) v = soft_threshold(v, delta);
    return out;
}

// --- quality metrics ---

// Plain mean squared error without clamping; used for signed fields such as
// residuals where clamping to [0,1] would be meaningless.
inline double mean_squared_error(const Image& a, const Image& b) {
    require(a.same_shape(b), "mean_squared_error: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.pix.size(); ++i) {
        const double d = a.pix[i] - b.pix[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.pix.size());
}

// Image metrics clamp their inputs to [0,1] first.
inline double mse(const Image& ref, const Image& est) {
    require(ref.same_shape(est), "mse: shape mismatch");
    return mean_squared_error(clamp01(ref), clamp01(est));
}

// PSNR with peak 1.0, capped at 99 dB (the documented value returned for
// identical images).
inline constexpr double kPsnrCap = 99.0;

inline double psnr(const Image& ref, const Image& est) {
    const double e = mse(ref, est);
    if (e <= 0.0) return kPsnrCap;
    return std::min(10.0 * std::log10(1.0 / e), kPsnrCap);
}

namespace detail {

inline const std::vector<double>& ssim_window() {
    // 11x11 Gaussian, sigma 1.5, normalized
    static const std::vector<double> win = [] {
        std::vector<double> w(121);
        double s = 0.0;
        for (int y = -5; y <= 5; ++y)
            for (int x = -5; x <= 5; ++x) {
                const double v = std::exp(-(y * y + x * x) / (2.0 * 1.5 * 1.5));
                w[static_cast<std::size_t>(y + 5) * 11 + (x + 5)] = v;
                s += v;
            }
        for (double& v : w) v /= s;
        return w;
    }();
    return win;
}

inline double ssim_plane(const double* a, const double* b, int h, int w) {
    const auto& win = ssim_window();
    constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03; // dynamic range 1.0
    double acc = 0.0;
    long count = 0;
    for (int y = 0; y + 11 <= h; ++y)
        for (int x = 0; x + 11 <= w; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int dy = 0; dy < 11; ++dy)
                for (int dx = 0; dx < 11; ++dx) {
                    const double wv = win[static_cast<std::size_t>(dy) * 11 + dx];
                    const double va = a[static_cast<std::size_t>(y + dy) * w + (x + dx)];
                    const double vb = b[static_cast<std::size_t>(y + dy) * w + (x + dx)];
                    ma += wv * va;
                    mb += wv * vb;
                    saa += wv * va * va;
                    sbb += wv * vb * vb;
                    sab += wv * va * vb;
                }
            const double va = saa - ma * ma;
            const double vb = sbb - mb * mb;
            const double cab = sab - ma * mb;
            acc += ((2 * ma * mb + C1) * (2 * cab + C2)) /
                   ((ma * ma + mb * mb + C1) * (va + vb + C2));
            ++count;
        }
    require(count > 0, "ssim: image smaller than the 11x11 window");
    return acc / static_cast<double>(count);
}

} // namespace detail

inline double ssim(const Image& ref, const Image& est) {
    require(ref.same_shape(est), "ssim: shape mismatch");
    const Image a = clamp01(ref), b = clamp01(est);
    double acc = 0.0;
    for (int c = 0; c < a.channels; ++c)
        acc += detail::ssim_plane(a.plane(c), b.plane(c), a.height, a.width);
    return acc / a.channels;
}

} // namespace sbd
