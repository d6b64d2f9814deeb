#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sbd/common.hpp"

namespace sbd {

// Small 2-D stencil used both for proper PSFs (nonnegative, unit sum) and for
// kernel differences (which sum to ~0). The unit-sum invariant is enforced by
// the PSF factories and the loader, not by the convolution routines.
struct Kernel {
    int height = 0;
    int width = 0;
    std::vector<double> w;

    Kernel() = default;
    Kernel(int h, int ww, double fill = 0.0)
        : height(h), width(ww), w(static_cast<std::size_t>(h) * ww, fill) {
        require(h > 0 && ww > 0, "kernel dimensions must be positive");
    }

    double& at(int y, int x) { return w[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const { return w[static_cast<std::size_t>(y) * width + x]; }

    double sum() const {
        double s = 0.0;
        for (double v : w) s += v;
        return s;
    }

    bool odd_sized() const { return (height % 2 == 1) && (width % 2 == 1); }

    // PSF invariant: odd side, finite, nonnegative, sum within 1e-12 of 1.
    void validate_psf() const {
        require(odd_sized(), "PSF must have odd height and width");
        ensure_finite(w, "kernel");
        for (double v : w) require(v >= 0.0, "PSF weights must be nonnegative");
        require(std::abs(sum() - 1.0) <= 1e-12, "PSF must sum to 1");
    }

    void normalize() {
        const double s = sum();
        require(s > 0.0, "cannot normalize kernel with nonpositive sum");
        for (double& v : w) v /= s;
        // force the invariant exactly despite rounding: fold the remainder into the peak
        double rem = 1.0 - sum();
        std::size_t peak = 0;
        for (std::size_t i = 1; i < w.size(); ++i)
            if (w[i] > w[peak]) peak = i;
        w[peak] += rem;
    }
};

inline Kernel delta_kernel(int side = 1) {
    require(side % 2 == 1, "delta kernel side must be odd");
    Kernel k(side, side);
    k.at(side / 2, side / 2) = 1.0;
    return k;
}

// Zero-pads `k` to odd h x w with the centers aligned.
inline Kernel pad_kernel_to(const Kernel& k, int h, int w) {
    require(h % 2 == 1 && w % 2 == 1, "padded kernel size must be odd");
    require(h >= k.height && w >= k.width, "cannot pad kernel to smaller size");
    Kernel out(h, w);
    const int oy = (h - k.height) / 2;
    const int ox = (w - k.width) / 2;
    for (int y = 0; y < k.height; ++y)
        for (int x = 0; x < k.width; ++x) out.at(y + oy, x + ox) = k.at(y, x);
    return out;
}

// --- text format (shared with the CLI): first line "H W", then H rows of W
// --- space-separated decimal weights.

inline void save_kernel(const Kernel& k, const std::string& path) {
    std::ofstream f(path);
    require(f.good(), "cannot open kernel file for writing: " + path);
    f << k.height << " " << k.width << "\n";
    char buf[40];
    for (int y = 0; y < k.height; ++y) {
        for (int x = 0; x < k.width; ++x) {
            std::snprintf(buf, sizeof buf, "%.17g", k.at(y, x));
            f << (x ? " " : "") << buf;
        }
        f << "\n";
    }
    require(f.good(), "write failed: " + path);
}

inline Kernel load_kernel(const std::string& path) {
    std::ifstream f(path);
    require(f.good(), "cannot open kernel file: " + path);
    int h = 0, w = 0;
    f >> h >> w;
    require(f.good() && h > 0 && w > 0, "malformed kernel header in " + path);
    require(h % 2 == 1 && w % 2 == 1, "kernel must be odd-sized in " + path);
    Kernel k(h, w);
    for (auto& v : k.w) {
        f >> v;
        require(!f.fail(), "malformed kernel body in " + path);
        require(v >= 0.0, "negative kernel weight in " + path);
    }
    ensure_finite(k.w, "kernel file");
    const double s = k.sum();
    require(std::abs(s - 1.0) < 1e-6, "kernel does not sum to 1 (got " + std::to_string(s) +
                                          ") in " + path);
    k.normalize();
    return k;
}

} // namespace sbd
