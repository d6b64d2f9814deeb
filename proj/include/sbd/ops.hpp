#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "sbd/common.hpp"
#include "sbd/signal.hpp"
#include "sbd/tensor.hpp"

// Primitive operator set: exactly what the two generator networks and the
// objective need. Every op validates shapes, keeps values finite and, when an
// input is tracked, records a backward closure on the tape.
//
// Subgradient conventions at kinks:
//   |.|'          at 0        -> 0
//   soft_shrink'  at |a|==d   -> 0   (1 for |a|>d, 0 for |a|<d)
//   leaky_relu'   at 0        -> slope

namespace sbd {

namespace detail {

inline int ceil_div(int a, int s) { return a >= 0 ? (a + s - 1) / s : -((-a) / s); }

inline std::shared_ptr<std::vector<double>> alloc(std::size_t n, double fill = 0.0) {
    return std::make_shared<std::vector<double>>(n, fill);
}

// restrict-qualified row kernels so the convolution loops vectorize
inline void row_axpy(int n, double a, const double* __restrict x, double* __restrict y) {
    for (int i = 0; i < n; ++i) y[i] += a * x[i];
}
inline void row_axpy_gather2(int n, double a, const double* __restrict x, double* __restrict y) {
    for (int i = 0; i < n; ++i) y[i] += a * x[2 * i];
}
inline void row_axpy_scatter2(int n, double a, const double* __restrict x, double* __restrict y) {
    for (int i = 0; i < n; ++i) y[2 * i] += a * x[i];
}
inline double row_dot(int n, const double* __restrict x, const double* __restrict y) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}
inline double row_dot_gather2(int n, const double* __restrict x, const double* __restrict y) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += x[i] * y[2 * i];
    return acc;
}

// fused 3-tap row kernels for the common conv3x3 stride-1 pad-1 case:
// y[j] += w0*x[j-1] + w1*x[j] + w2*x[j+1] with zero padding at the ends
inline void row_conv3(int w, double w0, double w1, double w2, const double* __restrict x,
                      double* __restrict y) {
    if (w == 1) {
        y[0] += w1 * x[0];
        return;
    }
    y[0] += w1 * x[0] + w2 * x[1];
    for (int j = 1; j + 1 < w; ++j) y[j] += w0 * x[j - 1] + w1 * x[j] + w2 * x[j + 1];
    y[w - 1] += w0 * x[w - 2] + w1 * x[w - 1];
}

// three shifted dot products sharing one pass: a_k += sum_j g[j] * x[j + k - 1]
inline void row_dot3(int w, const double* __restrict x, const double* __restrict g, double& a0,
                     double& a1, double& a2) {
    if (w == 1) {
        a1 += g[0] * x[0];
        return;
    }
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    s1 += g[0] * x[0];
    s2 += g[0] * x[1];
    for (int j = 1; j + 1 < w; ++j) {
        const double gj = g[j];
        s0 += gj * x[j - 1];
        s1 += gj * x[j];
        s2 += gj * x[j + 1];
    }
    s0 += g[w - 1] * x[w - 2];
    s1 += g[w - 1] * x[w - 1];
    a0 += s0;
    a1 += s1;
    a2 += s2;
}

} // namespace detail

// ---- elementwise arithmetic ----

inline Tensor add(const Tensor& a, const Tensor& b) {
    require(a.shape == b.shape, "add: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    const std::size_t n = a.size();
    auto out = detail::alloc(n);
    for (std::size_t i = 0; i < n; ++i) (*out)[i] = a.values()[i] + b.values()[i];
    ensure_finite(*out, "add");
    Tape* tp = detail::joint_tape(a, b);
    Tensor r(a.shape, out, tp, -1);
    if (tp) {
        const int an = a.tracked() ? a.node : -1, bn = b.tracked() ? b.node : -1;
        const int on = static_cast<int>(tp->size());
        r.node = tp->node(n, [an, bn, on, n](Tape& t) {
            const auto& g = t.grad(on);
            if (an >= 0) {
                auto& ga = t.grad_acc(an);
                for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
            }
            if (bn >= 0) {
                auto& gb = t.grad_acc(bn);
                for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
            }
        });
    }
    return r;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    require(a.shape == b.shape, "sub: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    const std::size_t n = a.size();
    auto out = detail::alloc(n);
    for (std::size_t i = 0; i < n; ++i) (*out)[i] = a.values()[i] - b.values()[i];
    ensure_finite(*out, "sub");
    Tape* tp = detail::joint_tape(a, b);
    Tensor r(a.shape, out, tp, -1);
    if (tp) {
        const int an = a.tracked() ? a.node : -1, bn = b.tracked() ? b.node : -1;
        const int on = static_cast<int>(tp->size());
        r.node = tp->node(n, [an, bn, on, n](Tape& t) {
            const auto& g = t.grad(on);
            if (an >= 0) {
                auto& ga = t.grad_acc(an);
                for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
            }
            if (bn >= 0) {
                auto& gb = t.grad_acc(bn);
                for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
            }
        });
    }
    return r;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    require(a.shape == b.shape, "mul: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    const std::size_t n = a.size();
    auto out = detail::alloc(n);
    for (std::size_t i = 0; i < n; ++i) (*out)[i] = a.values()[i] * b.values()[i];
    ensure_finite(*out, "mul");
    Tape* tp = detail::joint_tape(a, b);
    Tensor r(a.shape, out, tp, -1);
    if (tp) {
        const int an = a.tracked() ? a.node : -1, bn = b.tracked() ? b.node : -1;
        const int on = static_cast<int>(tp->size());
        auto ad = a.data, bd = b.data;
        r.node = tp->node(n, [an, bn, on, n, ad, bd](Tape& t) {
            const auto& g = t.grad(on);
            if (an >= 0) {
                auto& ga = t.grad_acc(an);
                for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * (*bd)[i];
            }
            if (bn >= 0) {
                auto& gb = t.grad_acc(bn);
                for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * (*ad)[i];
            }
        });
    }
    return r;
}

inline Tensor scale(const Tensor& a, double s) {
    ensure_finite(s, "scale factor");
    const std::size_t n = a.size();
    auto out = detail::alloc(n);
    for (std::size_t i = 0; i < n; ++i) (*out)[i] = a.values()[i] * s;
    ensure_finite(*out, "scale");
    Tensor r(a.shape, out, a.tape, -1);
    if (a.tracked()) {
        Tape* tp = a.tape;
        const int an = a.node;
        const int on = static_cast<int>(tp->size());
        r.node = tp->node(n, [an, on, n, s](Tape& t) {
            const auto& g = t.grad(on);
            auto& ga = t.grad_acc(an);
            for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * s;
        });
    }
    return r;
}

// ---- pointwise nonlinearities ----

namespace detail {

template <class Fwd, class Bwd>
Tensor pointwise(const Tensor& a, const char* name, Fwd fwd, Bwd dfdx) {
    const std::size_t n = a.size();
    auto out = alloc(n);
    for (std::size_t i = 0; i < n; ++i) (*out)[i] = fwd(a.values()[i]);
    ensure_finite(*out, name);
    Tensor r(a.shape, out, a.tape, -1);
    if (a.tracked()) {
        Tape* tp = a.tape;
        const int an = a.node;
        const int on = static_cast<int>(tp->size());
        auto ad = a.data;
        auto od = out;
        r.node = tp->node(n, [an, on, n, ad, od, dfdx](Tape& t) {
            const auto& g = t.grad(on);
            auto& ga = t.grad_acc(an);
            for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * dfdx((*ad)[i], (*od)[i]);
        });
    }
    return r;
}

} // namespace detail

inline Tensor leaky_relu(const Tensor& a, double slope) {
    return detail::pointwise(
        a, "leaky_relu", [slope](double x) { return x > 0.0 ? x : slope * x; },
        [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

inline Tensor sigmoid(const Tensor& a) {
    return detail::pointwise(
        a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double, double y) { return y * (1.0 - y); });
}

inline Tensor soft_shrink(const Tensor& a, double delta) {
    require(delta >= 0.0, "soft_shrink: delta must be nonnegative");
    return detail::pointwise(
        a, "soft_shrink",
        [delta](double x) { return soft_threshold(x, delta); },
        [delta](double x, double) { return std::abs(x) > delta ? 1.0 : 0.0; });
}

inline Tensor abs(const Tensor& a) {
    return detail::pointwise(
        a, "abs", [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Tensor square(const Tensor& a) {
    return detail::pointwise(
        a, "square", [](double x) { return x * x; },
        [](double x, double) { return 2.0 * x; });
}

// Per-channel spatial normalization with learned affine (instance norm).
// Keeps activation scale stable through the generator depth; with batch
// size one this is the batch-norm equivalent the untrained-prior nets rely
// on at their usual learning rates.
inline Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                            double eps = 1e-5) {
    require(x.shape.size() == 3, "instance_norm: input must be CxHxW");
    const int c = x.shape[0];
    const std::size_t plane = static_cast<std::size_t>(x.shape[1]) * x.shape[2];
    require(gamma.shape == Shape{c} && beta.shape == Shape{c},
            "instance_norm: affine params must have C entries");
    const std::size_t n = x.size();
    auto out = detail::alloc(n);
    auto xhat = detail::alloc(n); // saved for backward
    std::vector<double> inv_std(static_cast<std::size_t>(c));
    const double* xv = x.values().data();
    for (int ci = 0; ci < c; ++ci) {
        const double* xp = xv + ci * plane;
        double mu = 0.0;
        for (std::size_t i = 0; i < plane; ++i) mu += xp[i];
        mu /= static_cast<double>(plane);
        double var = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            const double d = xp[i] - mu;
            var += d * d;
        }
        var /= static_cast<double>(plane);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(ci)] = is;
        const double g = gamma.values()[ci], b = beta.values()[ci];
        double* op = out->data() + ci * plane;
        double* hp = xhat->data() + ci * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            hp[i] = (xp[i] - mu) * is;
            op[i] = g * hp[i] + b;
        }
    }
    ensure_finite(*out, "instance_norm");
    Tape* tp = detail::joint_tape(x, gamma);
    if (!tp && beta.tracked()) tp = beta.tape;
    Tensor r(x.shape, out, tp, -1);
    if (tp) {
        const int xn = x.tracked() ? x.node : -1;
        const int gn = gamma.tracked() ? gamma.node : -1;
        const int bn = beta.tracked() ? beta.node : -1;
        const int on = static_cast<int>(tp->size());
        auto gd = gamma.data;
        r.node = tp->node(n, [xn, gn, bn, on, c, plane, xhat, inv_std, gd](Tape& t) {
            const auto& g = t.grad(on);
            for (int ci = 0; ci < c; ++ci) {
                const double* gp = g.data() + ci * plane;
                const double* hp = xhat->data() + ci * plane;
                double sum_g = 0.0, sum_gh = 0.0;
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_g += gp[i];
                    sum_gh += gp[i] * hp[i];
                }
                if (gn >= 0) t.grad_acc(gn)[ci] += sum_gh;
                if (bn >= 0) t.grad_acc(bn)[ci] += sum_g;
                if (xn >= 0) {
                    double* gx = t.grad_acc(xn).data() + ci * plane;
                    const double k = (*gd)[ci] * inv_std[static_cast<std::size_t>(ci)];
                    const double mg = sum_g / static_cast<double>(plane);
                    const double mgh = sum_gh / static_cast<double>(plane);
                    for (std::size_t i = 0; i < plane; ++i)
                        gx[i] += k * (gp[i] - mg - hp[i] * mgh);
                }
            }
        });
    }
    return r;
}

// ---- reductions ----

inline Tensor sum(const Tensor& a) {
    const std::size_t n = a.size();
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    ensure_finite(acc, "sum");
    Tensor r(Shape{1}, std::make_shared<std::vector<double>>(1, acc), a.tape, -1);
    if (a.tracked()) {
        Tape* tp = a.tape;
        const int an = a.node;
        const int on = static_cast<int>(tp->size());
        r.node = tp->node(1, [an, on, n](Tape& t) {
            const double g = t.grad(on)[0];
            auto& ga = t.grad_acc(an);
            for (std::size_t i = 0; i < n; ++i) ga[i] += g;
        });
    }
    return r;
}

inline Tensor mean(const Tensor& a) {
    const std::size_t n = a.size();
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    acc /= static_cast<double>(n);
    ensure_finite(acc, "mean");
    Tensor r(Shape{1}, std::make_shared<std::vector<double>>(1, acc), a.tape, -1);
    if (a.tracked()) {
        Tape* tp = a.tape;
        const int an = a.node;
        const int on = static_cast<int>(tp->size());
        r.node = tp->node(1, [an, on, n](Tape& t) {
            const double g = t.grad(on)[0] / static_cast<double>(n);
            auto& ga = t.grad_acc(an);
            for (std::size_t i = 0; i < n; ++i) ga[i] += g;
        });
    }
    return r;
}

inline Tensor frob_sq(const Tensor& a) {
    const std::size_t n = a.size();
    double acc = 0.0;
    for (double v : a.values()) acc += v * v;
    ensure_finite(acc, "frob_sq");
    Tensor r(Shape{1}, std::make_shared<std::vector<double>>(1, acc), a.tape, -1);
    if (a.tracked()) {
        Tape* tp = a.tape;
        const int an = a.node;
        const int on = static_cast<int>(tp->size());
        auto ad = a.data;
        r.node = tp->node(1, [an, on, n, ad](Tape& t) {
            const double g = t.grad(on)[0];
            auto& ga = t.grad_acc(an);
            for (std::size_t i = 0; i < n; ++i) ga[i] += 2.0 * (*ad)[i] * g;
        });
    }
    return r;
}

// ---- forward differences (non-circular; width/height shrink by one) ----

namespace detail {

inline void diff_shape(const Shape& s, bool horizontal, int& c, int& h, int& w) {
    require(s.size() == 2 || s.size() == 3, "difference ops expect HxW or CxHxW");
    c = s.size() == 3 ? s[0] : 1;
    h = s[s.size() == 3 ? 1 : 0];
    w = s[s.size() == 3 ? 2 : 1];
    require(horizontal ? w >= 2 : h >= 2, "image too small for forward difference");
}

} // namespace detail

inline Tensor diff_h(const Tensor& a) {
    int c, h, w;
    detail::diff_shape(a.shape, true, c, h, w);
    Shape os = a.shape;
    os[os.size() - 1] = w - 1;
    const std::size_t n = numel(os);
    auto out = detail::alloc(n);
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y) {
            const double* src = a.values().data() + (static_cast<std::size_t>(ci) * h + y) * w;
            double* dst = out->data() + (static_cast<std::size_t>(ci) * h + y) * (w - 1);
            for (int x = 0; x + 1 < w; ++x) dst[x] = src[x + 1] - src[x];
        }
    ensure_finite(*out, "diff_h");
    Tensor r(os, out, a.tape, -1);
    if (a.tracked()) {
        Tape* tp = a.tape;
        const int an = a.node;
        const int on = static_cast<int>(tp->size());
        r.node = tp->node(n, [an, on, c, h, w](Tape& t) {
            const auto& g = t.grad(on);
            auto& ga = t.grad_acc(an);
            for (int ci = 0; ci < c; ++ci)
                for (int y = 0; y < h; ++y) {
                    const double* gr = g.data() + (static_cast<std::size_t>(ci) * h + y) * (w - 1);
                    double* gar = ga.data() + (static_cast<std::size_t>(ci) * h + y) * w;
                    for (int x = 0; x + 1 < w; ++x) {
                        gar[x + 1] += gr[x];
                        gar[x] -= gr[x];
                    }
                }
        });
    }
    return r;
}

inline Tensor diff_v(const Tensor& a) {
    int c, h, w;
    detail::diff_shape(a.shape, false, c, h, w);
    Shape os = a.shape;
    os[os.size() - 2] = h - 1;
    const std::size_t n = numel(os);
    auto out = detail::alloc(n);
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y + 1 < h; ++y) {
            const double* s0 = a.values().data() + (static_cast<std::size_t>(ci) * h + y) * w;
            const double* s1 = s0 + w;
            double* dst = out->data() + (static_cast<std::size_t>(ci) * (h - 1) + y) * w;
            for (int x = 0; x < w; ++x) dst[x] = s1[x] - s0[x];
        }
    ensure_finite(*out, "diff_v");
    Tensor r(os, out, a.tape, -1);
    if (a.tracked()) {
        Tape* tp = a.tape;
        const int an = a.node;
        const int on = static_cast<int>(tp->size());
        r.node = tp->node(n, [an, on, c, h, w](Tape& t) {
            const auto& g = t.grad(on);
            auto& ga = t.grad_acc(an);
            for (int ci = 0; ci < c; ++ci)
                for (int y = 0; y + 1 < h; ++y) {
                    const double* gr = g.data() + (static_cast<std::size_t>(ci) * (h - 1) + y) * w;
                    double* g0 = ga.data() + (static_cast<std::size_t>(ci) * h + y) * w;
                    double* g1 = g0 + w;
                    for (int x = 0; x < w; ++x) {
                        g1[x] += gr[x];
                        g0[x] -= gr[x];
                    }
                }
        });
    }
    return r;
}

// ---- channel concatenation ----

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require(a.shape.size() == 3 && b.shape.size() == 3, "concat_channels expects CxHxW");
    require(a.shape[1] == b.shape[1] && a.shape[2] == b.shape[2],
            "concat_channels: spatial dims mismatch");
    const int ca = a.shape[0], cb = b.shape[0];
    const std::size_t na = a.size(), nb = b.size();
    Shape os{ca + cb, a.shape[1], a.shape[2]};
    auto out = detail::alloc(na + nb);
    std::copy(a.values().begin(), a.values().end(), out->begin());
    std::copy(b.values().begin(), b.values().end(), out->begin() + static_cast<std::ptrdiff_t>(na));
    Tape* tp = detail::joint_tape(a, b);
    Tensor r(os, out, tp, -1);
    if (tp) {
        const int an = a.tracked() ? a.node : -1, bn = b.tracked() ? b.node : -1;
        const int on = static_cast<int>(tp->size());
        r.node = tp->node(na + nb, [an, bn, on, na, nb](Tape& t) {
            const auto& g = t.grad(on);
            if (an >= 0) {
                auto& ga = t.grad_acc(an);
                for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
            }
            if (bn >= 0) {
                auto& gb = t.grad_acc(bn);
                for (std::size_t i = 0; i < nb; ++i) gb[i] += g[na + i];
            }
        });
    }
    return r;
}

// ---- 2x upsampling ----

inline Tensor upsample2x_nearest(const Tensor& a) {
    require(a.shape.size() == 3, "upsample2x expects CxHxW");
    const int c = a.shape[0], h = a.shape[1], w = a.shape[2];
    Shape os{c, 2 * h, 2 * w};
    const std::size_t n = numel(os);
    auto out = detail::alloc(n);
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < 2 * h; ++y) {
            const double* src = a.values().data() + (static_cast<std::size_t>(ci) * h + y / 2) * w;
            double* dst = out->data() + (static_cast<std::size_t>(ci) * 2 * h + y) * 2 * w;
            for (int x = 0; x < 2 * w; ++x) dst[x] = src[x / 2];
        }
    Tensor r(os, out, a.tape, -1);
    if (a.tracked()) {
        Tape* tp = a.tape;
        const int an = a.node;
        const int on = static_cast<int>(tp->size());
        r.node = tp->node(n, [an, on, c, h, w](Tape& t) {
            const auto& g = t.grad(on);
            auto& ga = t.grad_acc(an);
            for (int ci = 0; ci < c; ++ci)
                for (int y = 0; y < 2 * h; ++y) {
                    const double* gr = g.data() + (static_cast<std::size_t>(ci) * 2 * h + y) * 2 * w;
                    double* gar = ga.data() + (static_cast<std::size_t>(ci) * h + y / 2) * w;
                    for (int x = 0; x < 2 * w; ++x) gar[x / 2] += gr[x];
                }
        });
    }
    return r;
}

namespace detail {

// Bilinear 2x sample positions (align-corners-false, edge clamped):
// out(y) samples input at y/2 - 0.25.
struct Lerp {
    int i0, i1;
    double w0, w1;
};

inline Lerp lerp_coef(int out_idx, int in_len) {
    const double s = 0.5 * out_idx - 0.25;
    double f = std::floor(s);
    int i0 = static_cast<int>(f);
    double w1 = s - f;
    int i1 = i0 + 1;
    if (i0 < 0) i0 = 0;
    if (i1 > in_len - 1) i1 = in_len - 1;
    return {i0, i1, 1.0 - w1, w1};
}

} // namespace detail

inline Tensor upsample2x_bilinear(const Tensor& a) {
    require(a.shape.size() == 3, "upsample2x expects CxHxW");
    const int c = a.shape[0], h = a.shape[1], w = a.shape[2];
    Shape os{c, 2 * h, 2 * w};
    const std::size_t n = numel(os);
    auto out = detail::alloc(n);
    std::vector<detail::Lerp> ly(2 * h), lx(2 * w);
    for (int y = 0; y < 2 * h; ++y) ly[y] = detail::lerp_coef(y, h);
    for (int x = 0; x < 2 * w; ++x) lx[x] = detail::lerp_coef(x, w);
    for (int ci = 0; ci < c; ++ci) {
        const double* src = a.values().data() + static_cast<std::size_t>(ci) * h * w;
        double* dst = out->data() + static_cast<std::size_t>(ci) * 4 * h * w;
        for (int y = 0; y < 2 * h; ++y) {
            const auto& cy = ly[y];
            const double* r0 = src + static_cast<std::size_t>(cy.i0) * w;
            const double* r1 = src + static_cast<std::size_t>(cy.i1) * w;
            double* orow = dst + static_cast<std::size_t>(y) * 2 * w;
            for (int x = 0; x < 2 * w; ++x) {
                const auto& cx = lx[x];
                orow[x] = cy.w0 * (cx.w0 * r0[cx.i0] + cx.w1 * r0[cx.i1]) +
                          cy.w1 * (cx.w0 * r1[cx.i0] + cx.w1 * r1[cx.i1]);
            }
        }
    }
    ensure_finite(*out, "upsample2x_bilinear");
    Tensor r(os, out, a.tape, -1);
    if (a.tracked()) {
        Tape* tp = a.tape;
        const int an = a.node;
        const int on = static_cast<int>(tp->size());
        r.node = tp->node(n, [an, on, c, h, w, ly, lx](Tape& t) {
            const auto& g = t.grad(on);
            auto& ga = t.grad_acc(an);
            for (int ci = 0; ci < c; ++ci) {
                const double* gr = g.data() + static_cast<std::size_t>(ci) * 4 * h * w;
                double* gar = ga.data() + static_cast<std::size_t>(ci) * h * w;
                for (int y = 0; y < 2 * h; ++y) {
                    const auto& cy = ly[y];
                    const double* grow = gr + static_cast<std::size_t>(y) * 2 * w;
                    for (int x = 0; x < 2 * w; ++x) {
                        const auto& cx = lx[x];
                        const double gv = grow[x];
                        gar[static_cast<std::size_t>(cy.i0) * w + cx.i0] += cy.w0 * cx.w0 * gv;
                        gar[static_cast<std::size_t>(cy.i0) * w + cx.i1] += cy.w0 * cx.w1 * gv;
                        gar[static_cast<std::size_t>(cy.i1) * w + cx.i0] += cy.w1 * cx.w0 * gv;
                        gar[static_cast<std::size_t>(cy.i1) * w + cx.i1] += cy.w1 * cx.w1 * gv;
                    }
                }
            }
        });
    }
    return r;
}

// ---- 2-D convolution (zero padding, stride 1 or 2) ----

namespace detail {

struct ConvDims {
    int ci, h, w, co, kh, kw, ho, wo, stride, pad;
};

inline ConvDims conv_dims(const Shape& xs, const Shape& ws, int stride, int pad) {
    require(xs.size() == 3, "conv2d: input must be CxHxW");
    require(ws.size() == 4, "conv2d: weight must be CoxCixKhxKw");
    require(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
    require(pad >= 0, "conv2d: negative padding");
    ConvDims d;
    d.ci = xs[0];
    d.h = xs[1];
    d.w = xs[2];
    d.co = ws[0];
    d.kh = ws[2];
    d.kw = ws[3];
    d.stride = stride;
    d.pad = pad;
    require(ws[1] == d.ci, "conv2d: weight input channels mismatch");
    d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
    d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
    require(d.h + 2 * pad >= d.kh && d.w + 2 * pad >= d.kw, "conv2d: kernel larger than padded input");
    return d;
}

// valid output range [lo,hi) along one axis for a given kernel offset
inline void conv_range(int k, int pad, int stride, int in_len, int out_len, int& lo, int& hi) {
    lo = std::max(0, ceil_div(pad - k, stride));
    const int num = in_len - 1 - k + pad;
    hi = num < 0 ? 0 : std::min(out_len, num / stride + 1);
    if (hi < lo) hi = lo;
}

} // namespace detail

inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, int stride, int pad) {
    const auto d = detail::conv_dims(x.shape, w.shape, stride, pad);
    if (bias) {
        require(bias->shape == Shape{d.co}, "conv2d: bias must have Co entries");
    }
    Shape os{d.co, d.ho, d.wo};
    const std::size_t n = numel(os);
    auto out = detail::alloc(n);
    const double* xv = x.values().data();
    const double* wv = w.values().data();
    {
        double* ov = out->data();
        for (int co = 0; co < d.co; ++co) {
            const double b = bias ? bias->values()[co] : 0.0;
            double* oplane = ov + static_cast<std::size_t>(co) * d.ho * d.wo;
            std::fill(oplane, oplane + static_cast<std::size_t>(d.ho) * d.wo, b);
            for (int ci = 0; ci < d.ci; ++ci) {
                const double* xplane = xv + static_cast<std::size_t>(ci) * d.h * d.w;
                const bool fast3 = d.stride == 1 && d.pad == 1 && d.kw == 3;
                for (int ky = 0; ky < d.kh; ++ky) {
                    int ylo, yhi;
                    detail::conv_range(ky, d.pad, d.stride, d.h, d.ho, ylo, yhi);
                    if (fast3) {
                        const double* wrow =
                            wv + ((static_cast<std::size_t>(co) * d.ci + ci) * d.kh + ky) * 3;
                        for (int yo = ylo; yo < yhi; ++yo)
                            detail::row_conv3(d.w, wrow[0], wrow[1], wrow[2],
                                              xplane + static_cast<std::size_t>(yo + ky - 1) * d.w,
                                              oplane + static_cast<std::size_t>(yo) * d.wo);
                        continue;
                    }
                    for (int kx = 0; kx < d.kw; ++kx) {
                        const double wgt =
                            wv[((static_cast<std::size_t>(co) * d.ci + ci) * d.kh + ky) * d.kw + kx];
                        int xlo, xhi;
                        detail::conv_range(kx, d.pad, d.stride, d.w, d.wo, xlo, xhi);
                        for (int yo = ylo; yo < yhi; ++yo) {
                            const double* xrow =
                                xplane + static_cast<std::size_t>(yo * d.stride + ky - d.pad) * d.w +
                                (kx - d.pad);
                            double* orow = oplane + static_cast<std::size_t>(yo) * d.wo;
                            if (d.stride == 1)
                                detail::row_axpy(xhi - xlo, wgt, xrow + xlo, orow + xlo);
                            else
                                detail::row_axpy_gather2(xhi - xlo, wgt, xrow + 2 * xlo, orow + xlo);
                        }
                    }
                }
            }
        }
    }
    ensure_finite(*out, "conv2d");
    Tape* tp = detail::joint_tape(x, w);
    if (!tp && bias && bias->tracked()) tp = bias->tape;
    Tensor r(os, out, tp, -1);
    if (tp) {
        const int xn = x.tracked() ? x.node : -1;
        const int wn = w.tracked() ? w.node : -1;
        const int bn = bias && bias->tracked() ? bias->node : -1;
        const int on = static_cast<int>(tp->size());
        auto xd = x.data, wd = w.data;
        r.node = tp->node(n, [xn, wn, bn, on, d, xd, wd](Tape& t) {
            const auto& g = t.grad(on);
            const double* gv = g.data();
            if (bn >= 0) {
                auto& gb = t.grad_acc(bn);
                for (int co = 0; co < d.co; ++co) {
                    const double* gplane = gv + static_cast<std::size_t>(co) * d.ho * d.wo;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < static_cast<std::size_t>(d.ho) * d.wo; ++i)
                        acc += gplane[i];
                    gb[co] += acc;
                }
            }
            if (wn >= 0) {
                auto& gw = t.grad_acc(wn);
                const double* xv2 = xd->data();
                const bool fast3 = d.stride == 1 && d.pad == 1 && d.kw == 3;
                for (int co = 0; co < d.co; ++co) {
                    const double* gplane = gv + static_cast<std::size_t>(co) * d.ho * d.wo;
                    for (int ci = 0; ci < d.ci; ++ci) {
                        const double* xplane = xv2 + static_cast<std::size_t>(ci) * d.h * d.w;
                        for (int ky = 0; ky < d.kh; ++ky) {
                            int ylo, yhi;
                            detail::conv_range(ky, d.pad, d.stride, d.h, d.ho, ylo, yhi);
                            if (fast3) {
                                double a0 = 0, a1 = 0, a2 = 0;
                                for (int yo = ylo; yo < yhi; ++yo)
                                    detail::row_dot3(
                                        d.w, xplane + static_cast<std::size_t>(yo + ky - 1) * d.w,
                                        gplane + static_cast<std::size_t>(yo) * d.wo, a0, a1, a2);
                                double* gwrow =
                                    gw.data() +
                                    ((static_cast<std::size_t>(co) * d.ci + ci) * d.kh + ky) * 3;
                                gwrow[0] += a0;
                                gwrow[1] += a1;
                                gwrow[2] += a2;
                                continue;
                            }
                            for (int kx = 0; kx < d.kw; ++kx) {
                                int xlo, xhi;
                                detail::conv_range(kx, d.pad, d.stride, d.w, d.wo, xlo, xhi);
                                double acc = 0.0;
                                for (int yo = ylo; yo < yhi; ++yo) {
                                    const double* xrow =
                                        xplane +
                                        static_cast<std::size_t>(yo * d.stride + ky - d.pad) * d.w +
                                        (kx - d.pad);
                                    const double* grow = gplane + static_cast<std::size_t>(yo) * d.wo;
                                    if (d.stride == 1)
                                        acc += detail::row_dot(xhi - xlo, grow + xlo, xrow + xlo);
                                    else
                                        acc += detail::row_dot_gather2(xhi - xlo, grow + xlo,
                                                                       xrow + 2 * xlo);
                                }
                                gw[((static_cast<std::size_t>(co) * d.ci + ci) * d.kh + ky) * d.kw +
                                   kx] += acc;
                            }
                        }
                    }
                }
            }
            if (xn >= 0) {
                auto& gx = t.grad_acc(xn);
                const double* wv2 = wd->data();
                const bool fast3 = d.stride == 1 && d.pad == 1 && d.kw == 3;
                for (int co = 0; co < d.co; ++co) {
                    const double* gplane = gv + static_cast<std::size_t>(co) * d.ho * d.wo;
                    for (int ci = 0; ci < d.ci; ++ci) {
                        double* gxplane = gx.data() + static_cast<std::size_t>(ci) * d.h * d.w;
                        for (int ky = 0; ky < d.kh; ++ky) {
                            int ylo, yhi;
                            detail::conv_range(ky, d.pad, d.stride, d.h, d.ho, ylo, yhi);
                            if (fast3) {
                                const double* wrow =
                                    wv2 +
                                    ((static_cast<std::size_t>(co) * d.ci + ci) * d.kh + ky) * 3;
                                for (int yo = ylo; yo < yhi; ++yo)
                                    detail::row_conv3(
                                        d.w, wrow[2], wrow[1], wrow[0],
                                        gplane + static_cast<std::size_t>(yo) * d.wo,
                                        gxplane + static_cast<std::size_t>(yo + ky - 1) * d.w);
                                continue;
                            }
                            for (int kx = 0; kx < d.kw; ++kx) {
                                const double wgt =
                                    wv2[((static_cast<std::size_t>(co) * d.ci + ci) * d.kh + ky) *
                                            d.kw +
                                        kx];
                                int xlo, xhi;
                                detail::conv_range(kx, d.pad, d.stride, d.w, d.wo, xlo, xhi);
                                for (int yo = ylo; yo < yhi; ++yo) {
                                    double* gxrow =
                                        gxplane +
                                        static_cast<std::size_t>(yo * d.stride + ky - d.pad) * d.w +
                                        (kx - d.pad);
                                    const double* grow = gplane + static_cast<std::size_t>(yo) * d.wo;
                                    if (d.stride == 1)
                                        detail::row_axpy(xhi - xlo, wgt, grow + xlo, gxrow + xlo);
                                    else
                                        detail::row_axpy_scatter2(xhi - xlo, wgt, grow + xlo,
                                                                  gxrow + 2 * xlo);
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return r;
}

inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
    return conv2d(x, w, &bias, stride, pad);
}

inline Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
    return conv2d(x, w, nullptr, stride, pad);
}

// Circular convolution with a fixed (non-optimized) kernel; the data-term
// operator. Backward is the adjoint (circular correlation) applied to the
// incoming gradient.
inline Tensor circ_conv(const Tensor& x, const Kernel& k) {
    require(x.shape.size() == 3, "circ_conv: input must be CxHxW");
    const int c = x.shape[0], h = x.shape[1], w = x.shape[2];
    detail::check_kernel_fits(k, h, w, "circ_conv");
    auto kspec = std::make_shared<std::vector<cplx>>(detail::kernel_spectrum(k, h, w));
    const std::size_t n = x.size();
    auto out = detail::alloc(n);
    for (int ci = 0; ci < c; ++ci)
        detail::circ_conv_plane_fft(x.values().data() + static_cast<std::size_t>(ci) * h * w,
                                    out->data() + static_cast<std::size_t>(ci) * h * w, h, w, *kspec,
                                    false);
    ensure_finite(*out, "circ_conv");
    Tensor r(x.shape, out, x.tape, -1);
    if (x.tracked()) {
        Tape* tp = x.tape;
        const int xn = x.node;
        const int on = static_cast<int>(tp->size());
        r.node = tp->node(n, [xn, on, c, h, w, kspec](Tape& t) {
            const auto& g = t.grad(on);
            auto& gx = t.grad_acc(xn);
            std::vector<double> tmp(static_cast<std::size_t>(h) * w);
            for (int ci = 0; ci < c; ++ci) {
                detail::circ_conv_plane_fft(g.data() + static_cast<std::size_t>(ci) * h * w,
                                            tmp.data(), h, w, *kspec, true);
                double* dst = gx.data() + static_cast<std::size_t>(ci) * h * w;
                for (std::size_t i = 0; i < tmp.size(); ++i) dst[i] += tmp[i];
            }
        });
    }
    return r;
}

// ---- gradient checking ----

struct FdOptions {
    double step = 1e-5;
    double kink_guard = 10.0; // skip coordinates within kink_guard*step of a kink
    std::function<double(std::size_t)> kink_distance; // optional, per coordinate
    // coordinates where both the analytic and fd magnitudes fall below this
    // are skipped: beneath the central-difference cancellation noise the
    // comparison carries no information
    double grad_floor = 0.0;
};

// Central-difference check of reverse-mode gradients for a scalar-valued
// function of one tensor. Returns the max over checked coordinates of
// |analytic - fd| / max(|analytic|, |fd|, 1e-8). Coordinates closer than
// kink_guard*step to a kink (per `kink_distance`) are excluded.
inline double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                                const FdOptions& opt = {}) {
    Tape tape;
    Tensor p = track_leaf(tape, point);
    Tensor loss = f(p);
    require(loss.size() == 1, "finite_diff_check: f must return a scalar");
    tape.backward(loss);
    const std::vector<double> analytic = tape.grad(p.node);

    const double h = opt.step;
    double max_err = 0.0;
    Tensor probe = Tensor::from(point.shape, point.values());
    for (std::size_t i = 0; i < probe.size(); ++i) {
        if (opt.kink_distance && opt.kink_distance(i) < opt.kink_guard * h) continue;
        const double orig = probe.values()[i];
        probe.values()[i] = orig + h;
        const double fp = f(probe).scalar();
        probe.values()[i] = orig - h;
        const double fm = f(probe).scalar();
        probe.values()[i] = orig;
        ensure_finite(fp, "finite_diff_check probe");
        ensure_finite(fm, "finite_diff_check probe");
        const double fd = (fp - fm) / (2.0 * h);
        if (opt.grad_floor > 0.0 &&
            std::max(std::abs(analytic[i]), std::abs(fd)) < opt.grad_floor)
            continue;
        const double err =
            std::abs(analytic[i] - fd) / std::max({std::abs(analytic[i]), std::abs(fd), 1e-8});
        max_err = std::max(max_err, err);
    }
    return max_err;
}

} // namespace sbd
