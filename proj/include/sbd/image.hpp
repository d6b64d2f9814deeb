#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "sbd/common.hpp"

namespace sbd {

// Plain planar image: channel-major, row-major within each plane. Pixel
// values are nominally in [0,1] but intermediates are allowed to leave the
// range; clamping happens only at metric computation and file save.
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> pix;

    Image() = default;
    Image(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w),
          pix(static_cast<std::size_t>(c) * h * w, fill) {
        require(c == 1 || c == 3, "image must have 1 or 3 channels");
        require(h > 0 && w > 0, "image dimensions must be positive");
    }

    std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
    std::size_t size() const { return pix.size(); }

    double* plane(int c) { return pix.data() + static_cast<std::size_t>(c) * plane_size(); }
    const double* plane(int c) const {
        return pix.data() + static_cast<std::size_t>(c) * plane_size();
    }

    double& at(int c, int y, int x) {
        return pix[static_cast<std::size_t>(c) * plane_size() +
                   static_cast<std::size_t>(y) * width + x];
    }
    double at(int c, int y, int x) const {
        return pix[static_cast<std::size_t>(c) * plane_size() +
                   static_cast<std::size_t>(y) * width + x];
    }

    bool same_shape(const Image& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

inline Image clamp01(const Image& im) {
    Image out = im;
    for (double& v : out.pix) v = std::clamp(v, 0.0, 1.0);
    return out;
}

inline void check_finite(const Image& im, const char* what) { ensure_finite(im.pix, what); }

} // namespace sbd
