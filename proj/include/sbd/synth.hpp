#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "sbd/common.hpp"
#include "sbd/image.hpp"

// Deterministic synthetic clean images for simulations and tests: piecewise
// smooth content (gradient background, anti-aliased rectangles and disks, one
// textured patch) so that blur, ringing and TV behavior are all exercised
// without shipping binary assets.

namespace sbd {

namespace detail {

// coverage of pixel (y,x) by the disk, 4x4 subsamples
inline double disk_coverage(int y, int x, double cy, double cx, double r) {
    int inside = 0;
    for (int sy = 0; sy < 4; ++sy)
        for (int sx = 0; sx < 4; ++sx) {
            const double py = y + (2.0 * sy - 3.0) / 8.0 - cy;
            const double px = x + (2.0 * sx - 3.0) / 8.0 - cx;
            if (py * py + px * px <= r * r) ++inside;
        }
    return inside / 16.0;
}

} // namespace detail

inline Image synth_image(int h, int w, std::uint64_t seed, int channels = 1) {
    require(h >= 16 && w >= 16, "synth_image: too small");
    Image im(channels, h, w);
    std::mt19937_64 rng(mix_seed(seed, 0xa11ce));
    std::uniform_real_distribution<double> u(0.0, 1.0);

    for (int c = 0; c < channels; ++c) {
        const double gx = 0.15 + 0.2 * u(rng), gy = 0.15 + 0.2 * u(rng);
        const double base = 0.25 + 0.2 * u(rng);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                im.at(c, y, x) = base + gx * x / (w - 1.0) + gy * y / (h - 1.0);
    }

    const int nrect = 3, ndisk = 3;
    for (int k = 0; k < nrect; ++k) {
        const int rw = static_cast<int>((0.1 + 0.25 * u(rng)) * w);
        const int rh = static_cast<int>((0.1 + 0.25 * u(rng)) * h);
        const int x0 = static_cast<int>(u(rng) * (w - rw - 1));
        const int y0 = static_cast<int>(u(rng) * (h - rh - 1));
        const double val = 0.1 + 0.8 * u(rng);
        for (int c = 0; c < channels; ++c) {
            const double v = channels == 1 ? val : 0.1 + 0.8 * u(rng);
            for (int y = y0; y < y0 + rh; ++y)
                for (int x = x0; x < x0 + rw; ++x) im.at(c, y, x) = v;
        }
    }
    for (int k = 0; k < ndisk; ++k) {
        const double r = (0.06 + 0.12 * u(rng)) * std::min(h, w);
        const double cy = r + u(rng) * (h - 2 * r);
        const double cx = r + u(rng) * (w - 2 * r);
        const double val = 0.1 + 0.8 * u(rng);
        const int ylo = std::max(0, static_cast<int>(cy - r) - 1);
        const int yhi = std::min(h - 1, static_cast<int>(cy + r) + 1);
        const int xlo = std::max(0, static_cast<int>(cx - r) - 1);
        const int xhi = std::min(w - 1, static_cast<int>(cx + r) + 1);
        for (int c = 0; c < channels; ++c) {
            const double v = channels == 1 ? val : 0.1 + 0.8 * u(rng);
            for (int y = ylo; y <= yhi; ++y)
                for (int x = xlo; x <= xhi; ++x) {
                    const double cov = detail::disk_coverage(y, x, cy, cx, r);
                    if (cov > 0.0) im.at(c, y, x) = (1.0 - cov) * im.at(c, y, x) + cov * v;
                }
        }
    }
    // one textured patch with a diagonal sinusoid
    {
        const int pw = w / 4, ph = h / 4;
        const int x0 = static_cast<int>(u(rng) * (w - pw - 1));
        const int y0 = static_cast<int>(u(rng) * (h - ph - 1));
        const double freq = 0.5 + 0.6 * u(rng);
        for (int c = 0; c < channels; ++c)
            for (int y = y0; y < y0 + ph; ++y)
                for (int x = x0; x < x0 + pw; ++x)
                    im.at(c, y, x) =
                        0.5 + 0.35 * std::sin(freq * (x - x0) + 0.7 * freq * (y - y0));
    }
    for (double& v : im.pix) v = std::clamp(v, 0.02, 0.98);
    return im;
}

} // namespace sbd
