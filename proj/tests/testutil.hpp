#pragma once

#include <random>
#include <vector>

#include "sbd/image.hpp"
#include "sbd/tensor.hpp"

namespace sbd::test {

inline Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(numel(s));
    for (double& x : v) x = u(rng);
    return Tensor::from(std::move(s), std::move(v));
}

inline Image random_image(int c, int h, int w, std::uint64_t seed, double lo = 0.0,
                          double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Image im(c, h, w);
    for (double& x : im.pix) x = u(rng);
    return im;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double max_abs_diff(const Image& a, const Image& b) { return max_abs_diff(a.pix, b.pix); }

} // namespace sbd::test
