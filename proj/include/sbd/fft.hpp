#pragma once

#include <complex>
#include <numbers>
#include <vector>

#include "sbd/common.hpp"

// Self-contained complex FFT: iterative radix-2 for power-of-two lengths,
// Bluestein's chirp-z for everything else. Image dimensions after padding are
// multiples of 2^depth, not necessarily powers of two, so arbitrary lengths
// matter here.

namespace sbd {

using cplx = std::complex<double>;

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

inline void fft_pow2(std::vector<cplx>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const cplx wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                cplx u = a[i + k];
                cplx v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

// Forward DFT of arbitrary length via Bluestein: x_k -> sum_n x_n e^{-2pi i kn/N}.
inline void fft_bluestein(std::vector<cplx>& a) {
    const std::size_t n = a.size();
    const std::size_t m = next_pow2(2 * n - 1);
    // chirp c_k = exp(-i pi k^2 / n); k^2 taken mod 2n to keep the argument small
    std::vector<cplx> chirp(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::uint64_t k2 = (static_cast<std::uint64_t>(k) * k) % (2 * n);
        const double ang = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
        chirp[k] = cplx(std::cos(ang), std::sin(ang));
    }
    std::vector<cplx> fa(m, cplx(0, 0)), fb(m, cplx(0, 0));
    for (std::size_t k = 0; k < n; ++k) fa[k] = a[k] * chirp[k];
    fb[0] = std::conj(chirp[0]);
    for (std::size_t k = 1; k < n; ++k) fb[k] = fb[m - k] = std::conj(chirp[k]);
    fft_pow2(fa);
    fft_pow2(fb);
    for (std::size_t k = 0; k < m; ++k) fa[k] *= fb[k];
    // inverse pow2 FFT via conjugation
    for (auto& v : fa) v = std::conj(v);
    fft_pow2(fa);
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t k = 0; k < n; ++k) a[k] = std::conj(fa[k]) * inv_m * chirp[k];
}

} // namespace detail

inline void fft(std::vector<cplx>& a) {
    if (a.size() <= 1) return;
    if (detail::is_pow2(a.size()))
        detail::fft_pow2(a);
    else
        detail::fft_bluestein(a);
}

inline void ifft(std::vector<cplx>& a) {
    if (a.size() <= 1) return;
    for (auto& v : a) v = std::conj(v);
    fft(a);
    const double inv_n = 1.0 / static_cast<double>(a.size());
    for (auto& v : a) v = std::conj(v) * inv_n;
}

// In-place 2-D FFT over a row-major h x w grid.
inline void fft2(std::vector<cplx>& a, int h, int w, bool inverse) {
    require(static_cast<std::size_t>(h) * w == a.size(), "fft2: size mismatch");
    std::vector<cplx> buf;
    buf.resize(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        std::copy(a.begin() + static_cast<std::size_t>(y) * w,
                  a.begin() + static_cast<std::size_t>(y + 1) * w, buf.begin());
        if (inverse) ifft(buf); else fft(buf);
        std::copy(buf.begin(), buf.end(), a.begin() + static_cast<std::size_t>(y) * w);
    }
    buf.resize(static_cast<std::size_t>(h));
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) buf[y] = a[static_cast<std::size_t>(y) * w + x];
        if (inverse) ifft(buf); else fft(buf);
        for (int y = 0; y < h; ++y) a[static_cast<std::size_t>(y) * w + x] = buf[y];
    }
}

} // namespace sbd
