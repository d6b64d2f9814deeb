#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "sbd/common.hpp"

namespace sbd {

// Standard Adam with bias correction over a group of parameter tensors.
// One adam_step call advances step_count by exactly one.
struct AdamState {
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    long step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState for_sizes(const std::vector<std::size_t>& sizes) {
        AdamState st;
        st.first_moment.reserve(sizes.size());
        st.second_moment.reserve(sizes.size());
        for (std::size_t n : sizes) {
            st.first_moment.emplace_back(n, 0.0);
            st.second_moment.emplace_back(n, 0.0);
        }
        return st;
    }
};

inline void adam_step(const std::vector<std::span<double>>& params,
                      const std::vector<std::span<const double>>& grads, AdamState& st, double lr) {
    require(lr >= 0.0, "adam_step: learning rate must be nonnegative");
    require(params.size() == grads.size() && params.size() == st.first_moment.size(),
            "adam_step: parameter/gradient/state arity mismatch");
    st.step_count += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto p = params[t];
        auto g = grads[t];
        auto& m = st.first_moment[t];
        auto& v = st.second_moment[t];
        require(p.size() == g.size() && p.size() == m.size(), "adam_step: shape mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i];
            if (!std::isfinite(gi)) fail("adam_step: non-finite gradient");
            m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * gi;
            v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + st.epsilon);
        }
    }
}

} // namespace sbd
