#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sbd/adam.hpp"
#include "sbd/archive.hpp"
#include "sbd/common.hpp"
#include "sbd/degradation.hpp"
#include "sbd/image.hpp"
#include "sbd/network.hpp"
#include "sbd/ops.hpp"
#include "sbd/signal.hpp"

// Alternating minimization: per outer iteration, one joint Adam step on both
// generators against
//
//   ||y - k (*) I(z_x) - R(z_r) - idct2(v)||_F^2
//     + l1*TV(I(z_x)) + l2*||R(z_r)||_1 + l3*||v||_1
//
// followed by one proximal-gradient step on the DCT coefficients v computed
// from the cached forward outputs:
//
//   v <- S_{l3/L}( (1 - 2/L) v + (2/L) dct2(y - k (*) x_hat - r_hat) ).
//
// With L = 2 this single step is the exact minimizer of the v-subproblem
// (the DCT is orthonormal, so the data term's gradient in v is 2-Lipschitz).

namespace sbd {

enum class AblationMode { Full, NoRSparsity, NoVSparsity, NoTv, NoDip, NoDrp, NoRTerm };

inline std::string ablation_name(AblationMode m) {
    switch (m) {
        case AblationMode::Full: return "full";
        case AblationMode::NoRSparsity: return "no_r_sparsity";
        case AblationMode::NoVSparsity: return "no_v_sparsity";
        case AblationMode::NoTv: return "no_tv";
        case AblationMode::NoDip: return "no_dip";
        case AblationMode::NoDrp: return "no_drp";
        case AblationMode::NoRTerm: return "no_r_term";
    }
    fail("unknown ablation mode");
}

inline AblationMode ablation_from_name(const std::string& s) {
    for (AblationMode m :
         {AblationMode::Full, AblationMode::NoRSparsity, AblationMode::NoVSparsity,
          AblationMode::NoTv, AblationMode::NoDip, AblationMode::NoDrp, AblationMode::NoRTerm})
        if (ablation_name(m) == s) return m;
    fail("unknown ablation mode: " + s);
}

struct SolverConfig {
    // Regularizer weights. The TV and DCT-sparsity weights are the published
    // values converted from the 8-bit pixel convention they were tuned under
    // to this library's [0,1] convention (all terms scale linearly in the
    // pixel range except the quadratic data term, hence /255). The residual
    // L1 weight is re-tuned: converted or not it sits orders of magnitude
    // below the level at which it can shrink noise out of the residual
    // estimate, so it is set where the sparse prior actually functions.
    double lambda1 = 5e-2 / 255.0; // TV weight
    double lambda2 = 1e-3;         // residual L1 weight
    double lambda3 = 5e-7 / 255.0; // DCT-coefficient L1 weight
    double lr_image = 9e-3;
    double lr_residual = 5e-4;
    int iterations = 1500;
    // Proximal step constant for the v-update. L = 2 makes the single step
    // the exact minimizer of the v-subproblem, but an exactly minimized v
    // swallows the whole data misfit each iteration and starves both
    // generators (the alternating scheme degenerates to a flat image).
    // The default keeps v a slow accumulator of the persistent misfit.
    double prox_step_L = 2000.0;
    std::uint64_t seed = 0;
    AblationMode ablation = AblationMode::Full;
    // Per-branch generator topology; heads and init seeds are forced per
    // branch. The image branch normalizes (it must synthesize a full-range
    // image); the residual branch does not, which keeps it low-gain, the
    // right bias for a small sparse residual.
    NetConfig net;          // image branch
    NetConfig residual_net = [] {
        NetConfig c;
        c.use_norm = false;
        return c;
    }();

    void validate() const {
        require(lambda1 >= 0 && lambda2 >= 0 && lambda3 >= 0, "solver: lambdas must be >= 0");
        require(lr_image >= 0 && lr_residual >= 0, "solver: learning rates must be >= 0");
        require(iterations >= 0, "solver: iterations must be >= 0");
        require(prox_step_L > 0, "solver: L must be positive");
    }
};

// Weighted objective components; parts sum to total.
struct ObjectiveParts {
    double data = 0, tv = 0, r_l1 = 0, v_l1 = 0, total = 0;
};

struct LossRecord {
    int iter = 0;
    double data = 0, tv = 0, r_l1 = 0, v_l1 = 0, total = 0;
    // objective pieces that change across the v-update, recorded after it
    double data_after_v = 0, v_l1_after_v = 0;
};

struct SolverResult {
    Image x_hat, r_hat, h_hat;
    std::vector<LossRecord> trace;
    SolverConfig config;
};

// One branch of the model: an untrained generator network, or (for the
// ablations) a directly optimized free tensor with an optional sigmoid squash.
class Generator {
public:
    enum class Kind { Net, FreeTensor };

    static Generator make_net(const NetConfig& cfg, int out_ch, int h, int w) {
        Generator g;
        g.kind_ = Kind::Net;
        g.net_ = std::make_unique<Network>(cfg, out_ch, h, w);
        return g;
    }

    static Generator make_free(Shape shape, bool sigmoid_squash) {
        Generator g;
        g.kind_ = Kind::FreeTensor;
        g.squash_ = sigmoid_squash;
        g.free_ = Param{"value", shape,
                        std::make_shared<std::vector<double>>(numel(shape), 0.0), -1};
        return g;
    }

    Kind kind() const { return kind_; }
    Network* net() { return net_.get(); }
    const Network* net() const { return net_.get(); }

    Tensor forward(Tape* tape) {
        if (kind_ == Kind::Net) return net_->forward(tape);
        free_.node = -1;
        Tensor t(free_.shape, free_.value);
        if (tape) {
            t = track_leaf(*tape, t);
            free_.node = t.node;
        }
        return squash_ ? sigmoid(t) : t;
    }

    std::vector<Param>& params() {
        if (kind_ == Kind::Net) return net_->params();
        self_.clear();
        self_.push_back(free_);
        return self_;
    }

    // Free-tensor parameters live in this object, not in a Network; expose
    // the real storage for optimizer updates.
    Param& free_param() { return free_; }
    const Param& free_param() const { return free_; }

    std::vector<std::size_t> param_sizes() {
        std::vector<std::size_t> s;
        if (kind_ == Kind::Net)
            for (auto& p : net_->params()) s.push_back(p.size());
        else
            s.push_back(free_.size());
        return s;
    }

private:
    Kind kind_ = Kind::Net;
    std::unique_ptr<Network> net_;
    bool squash_ = false;
    Param free_;
    std::vector<Param> self_;
};

class Solver {
public:
    Solver(const Image& y, const Kernel& k_hat, SolverConfig cfg)
        : y_(y), k_hat_(k_hat), cfg_(std::move(cfg)) {
        cfg_.validate();
        check_finite(y_, "solver input");
        k_hat_.validate_psf();
        detail::check_kernel_fits(k_hat_, y_.height, y_.width, "solver");
        build_generators();
        v_ = Image(y_.channels, y_.height, y_.width, 0.0);
        iter_ = 0;
    }

    const SolverConfig& config() const { return cfg_; }
    int iter() const { return iter_; }
    const Image& v() const { return v_; }
    Image& v_mut() { return v_; }
    const std::vector<LossRecord>& trace() const { return trace_; }
    Generator& image_generator() { return image_gen_; }
    Generator* residual_generator() { return use_r_ ? &residual_gen_ : nullptr; }
    bool has_cached_forward() const { return cached_; }
    const Image& cached_x_hat() const { return x_cache_; }
    const Image& cached_r_hat() const { return r_cache_; }

    // Current objective value at (theta, zeta, v), freshly evaluated.
    ObjectiveParts objective() {
        Tensor x = image_gen_.forward(nullptr);
        Tensor r = use_r_ ? residual_gen_.forward(nullptr)
                          : Tensor::zeros({y_.channels, y_.height, y_.width});
        return objective_at(to_image(x), to_image(r));
    }

    // Lines 2-4: forward both generators, one backward pass of the full
    // objective with v fixed, one Adam step on each branch.
    void step_networks() {
        Tape tape;
        Graph g;
        try {
            g = build_graph(tape);
            tape.backward(g.total);
        } catch (const Error& e) {
            fail("iteration " + std::to_string(iter_) + ": " + e.what());
        }

        LossRecord rec;
        rec.iter = iter_;
        rec.data = g.data.scalar();
        rec.tv = g.tv_weighted;
        rec.r_l1 = g.rl1_weighted;
        rec.v_l1 = cfg_.lambda3 * l1_of(v_);
        rec.total = g.total.scalar() + rec.v_l1;
        rec.data_after_v = rec.data;
        rec.v_l1_after_v = rec.v_l1;
        trace_.push_back(rec);

        apply_adam(image_gen_, adam_image_, cfg_.lr_image, tape);
        if (use_r_) apply_adam(residual_gen_, adam_residual_, cfg_.lr_residual, tape);

        x_cache_ = to_image(g.x_hat);
        kx_cache_ = to_image(g.kx);
        r_cache_ = use_r_ ? to_image(g.r_hat) : Image(y_.channels, y_.height, y_.width, 0.0);
        cached_ = true;
        iter_ += 1;
    }

    // Central-difference check of the assembled objective's gradient with
    // respect to `count` randomly chosen generator weights. Coordinates whose
    // two-scale fd estimates disagree (a kink within the probe radius) are
    // resampled. Returns the max relative error.
    double gradient_check_fd(int count, std::uint64_t seed, double h = 1e-5) {
        Tape tape;
        Graph g = build_graph(tape);
        tape.backward(g.total);

        std::vector<Param*> all;
        auto collect = [&](Generator& gen) {
            if (gen.kind() == Generator::Kind::Net)
                for (auto& p : gen.net()->params()) all.push_back(&p);
            else
                all.push_back(&gen.free_param());
        };
        collect(image_gen_);
        if (use_r_) collect(residual_gen_);
        // snapshot gradients now: untracked forwards below reset node ids
        std::vector<std::vector<double>> grads;
        grads.reserve(all.size());
        for (Param* p : all) grads.push_back(tape.grad(p->node));

        std::mt19937_64 rng(seed);
        auto objective_value = [&] {
            ObjectiveParts p = objective();
            return p.data + p.tv + p.r_l1; // v_l1 is constant in the weights
        };
        double worst = 0.0;
        int checked = 0, attempts = 0;
        while (checked < count && attempts < 8 * count) {
            ++attempts;
            const std::size_t pick = rng() % all.size();
            Param& p = *all[pick];
            const std::size_t idx = rng() % p.size();
            const double analytic = grads[pick][idx];
            const double orig = (*p.value)[idx];
            auto fd_at = [&](double step) {
                (*p.value)[idx] = orig + step;
                const double fp = objective_value();
                (*p.value)[idx] = orig - step;
                const double fm = objective_value();
                (*p.value)[idx] = orig;
                return (fp - fm) / (2.0 * step);
            };
            const double fd1 = fd_at(h);
            const double fd2 = fd_at(h / 4.0);
            const double scale = std::max({std::abs(fd1), std::abs(fd2), 1e-8});
            if (std::abs(fd1 - fd2) / scale > 1e-4) continue; // kink in probe radius
            worst = std::max(worst,
                             std::abs(analytic - fd2) / std::max({std::abs(analytic),
                                                                  std::abs(fd2), 1e-8}));
            ++checked;
        }
        require(checked == count, "gradient_check_fd: could not find enough smooth coordinates");
        return worst;
    }

    // Line 5: proximal-gradient step on v from the cached forward outputs.
    void step_v() {
        require(cached_, "step_v: no cached forward outputs; run step_networks first");
        Image c = y_;
        for (std::size_t i = 0; i < c.pix.size(); ++i)
            c.pix[i] -= kx_cache_.pix[i] + r_cache_.pix[i];
        const Image dc = dct2(c);
        const double rate = 2.0 / cfg_.prox_step_L;
        const double thresh = cfg_.lambda3 / cfg_.prox_step_L;
        for (std::size_t i = 0; i < v_.pix.size(); ++i)
            v_.pix[i] = soft_threshold((1.0 - rate) * v_.pix[i] + rate * dc.pix[i], thresh);
        check_finite(v_, "step_v");
        if (!trace_.empty()) {
            // data term after the v-update, via Parseval on the DCT residual
            double acc = 0.0;
            for (std::size_t i = 0; i < v_.pix.size(); ++i) {
                const double d = dc.pix[i] - v_.pix[i];
                acc += d * d;
            }
            trace_.back().data_after_v = acc;
            trace_.back().v_l1_after_v = cfg_.lambda3 * l1_of(v_);
        }
    }

    SolverResult run() {
        while (iter_ < cfg_.iterations) {
            step_networks();
            step_v();
        }
        SolverResult res;
        res.x_hat = to_image(image_gen_.forward(nullptr));
        res.r_hat = use_r_ ? to_image(residual_gen_.forward(nullptr))
                           : Image(y_.channels, y_.height, y_.width, 0.0);
        res.h_hat = idct2(v_);
        res.trace = trace_;
        res.config = cfg_;
        return res;
    }

    // --- checkpointing (named tensors + flat blob, see archive.hpp) ---

    void save_state(const std::string& prefix) const {
        std::vector<NamedTensor> ts;
        auto dump_gen = [&](const char* tag, const Generator& g) {
            if (g.kind() == Generator::Kind::Net) {
                for (const auto& p : g.net()->params())
                    ts.push_back({std::string(tag) + "." + p.name, p.shape, *p.value});
            } else {
                const Param& p = g.free_param();
                ts.push_back({std::string(tag) + "." + p.name, p.shape, *p.value});
            }
        };
        auto dump_adam = [&](const char* tag, const AdamState& st) {
            for (std::size_t i = 0; i < st.first_moment.size(); ++i) {
                ts.push_back({std::string(tag) + ".m" + std::to_string(i),
                              Shape{static_cast<int>(st.first_moment[i].size())},
                              st.first_moment[i]});
                ts.push_back({std::string(tag) + ".v" + std::to_string(i),
                              Shape{static_cast<int>(st.second_moment[i].size())},
                              st.second_moment[i]});
            }
            ts.push_back({std::string(tag) + ".step", Shape{1},
                          {static_cast<double>(st.step_count)}});
        };
        dump_gen("image", image_gen_);
        if (use_r_) dump_gen("residual", residual_gen_);
        dump_adam("adam_image", adam_image_);
        if (use_r_) dump_adam("adam_residual", adam_residual_);
        ts.push_back({"v", Shape{v_.channels, v_.height, v_.width}, v_.pix});
        ts.push_back({"iter", Shape{1}, {static_cast<double>(iter_)}});
        save_archive(prefix, ts);
    }

    void load_state(const std::string& prefix) {
        auto ts = load_archive(prefix);
        auto find = [&](const std::string& name) -> NamedTensor& {
            for (auto& t : ts)
                if (t.name == name) return t;
            fail("checkpoint missing tensor: " + name);
        };
        auto load_gen = [&](const char* tag, Generator& g) {
            if (g.kind() == Generator::Kind::Net) {
                for (auto& p : g.net()->params()) {
                    auto& t = find(std::string(tag) + "." + p.name);
                    require(t.shape == p.shape, "checkpoint shape mismatch at " + t.name);
                    *p.value = t.values;
                }
            } else {
                auto& p = g.free_param();
                auto& t = find(std::string(tag) + "." + p.name);
                require(t.shape == p.shape, "checkpoint shape mismatch at " + t.name);
                *p.value = t.values;
            }
        };
        auto load_adam = [&](const char* tag, AdamState& st) {
            for (std::size_t i = 0; i < st.first_moment.size(); ++i) {
                st.first_moment[i] = find(std::string(tag) + ".m" + std::to_string(i)).values;
                st.second_moment[i] = find(std::string(tag) + ".v" + std::to_string(i)).values;
            }
            st.step_count = static_cast<long>(find(std::string(tag) + ".step").values[0]);
        };
        load_gen("image", image_gen_);
        if (use_r_) load_gen("residual", residual_gen_);
        load_adam("adam_image", adam_image_);
        if (use_r_) load_adam("adam_residual", adam_residual_);
        auto& vt = find("v");
        require(vt.shape == (Shape{v_.channels, v_.height, v_.width}),
                "checkpoint v shape mismatch");
        v_.pix = vt.values;
        iter_ = static_cast<int>(find("iter").values[0]);
        cached_ = false;
    }

private:
    struct Graph {
        Tensor x_hat, r_hat, kx, data, total;
        double tv_weighted = 0.0, rl1_weighted = 0.0;
    };

    // objective graph at the current parameters with v held fixed
    Graph build_graph(Tape& tape) {
        Graph g;
        g.x_hat = image_gen_.forward(&tape);
        g.kx = circ_conv(g.x_hat, k_hat_);
        Image yh = y_;
        if (!v_is_zero()) {
            const Image h = idct2(v_);
            for (std::size_t i = 0; i < yh.pix.size(); ++i) yh.pix[i] -= h.pix[i];
        }
        Tensor resid = sub(Tensor::from({y_.channels, y_.height, y_.width}, yh.pix), g.kx);
        if (use_r_) {
            g.r_hat = residual_gen_.forward(&tape);
            resid = sub(resid, g.r_hat);
        }
        g.data = frob_sq(resid);
        g.total = g.data;
        if (cfg_.lambda1 > 0.0) {
            Tensor tv_t = add(sum(sbd::abs(diff_h(g.x_hat))), sum(sbd::abs(diff_v(g.x_hat))));
            g.tv_weighted = cfg_.lambda1 * tv_t.scalar();
            g.total = add(g.total, scale(tv_t, cfg_.lambda1));
        }
        if (use_r_ && cfg_.lambda2 > 0.0) {
            Tensor rl1_t = sum(sbd::abs(g.r_hat));
            g.rl1_weighted = cfg_.lambda2 * rl1_t.scalar();
            g.total = add(g.total, scale(rl1_t, cfg_.lambda2));
        }
        return g;
    }

    void build_generators() {
        const int c = y_.channels, h = y_.height, w = y_.width;
        NetConfig icfg = cfg_.net;
        icfg.head = HeadKind::Sigmoid;
        icfg.init_seed = mix_seed(cfg_.seed, 10);
        NetConfig rcfg = cfg_.residual_net;
        rcfg.head = HeadKind::SoftShrink;
        rcfg.init_seed = mix_seed(cfg_.seed, 20);

        switch (cfg_.ablation) {
            case AblationMode::NoRSparsity: cfg_.lambda2 = 0.0; break;
            case AblationMode::NoVSparsity: cfg_.lambda3 = 0.0; break;
            case AblationMode::NoTv: cfg_.lambda1 = 0.0; break;
            default: break;
        }

        if (cfg_.ablation == AblationMode::NoDip)
            image_gen_ = Generator::make_free({c, h, w}, true);
        else
            image_gen_ = Generator::make_net(icfg, c, h, w);

        use_r_ = cfg_.ablation != AblationMode::NoRTerm;
        if (use_r_) {
            if (cfg_.ablation == AblationMode::NoDrp)
                residual_gen_ = Generator::make_free({c, h, w}, false);
            else
                residual_gen_ = Generator::make_net(rcfg, c, h, w);
            adam_residual_ = AdamState::for_sizes(residual_gen_.param_sizes());
        }
        adam_image_ = AdamState::for_sizes(image_gen_.param_sizes());
    }

    bool v_is_zero() const {
        for (double x : v_.pix)
            if (x != 0.0) return false;
        return true;
    }

    static double l1_of(const Image& im) {
        double s = 0.0;
        for (double x : im.pix) s += std::abs(x);
        return s;
    }

    ObjectiveParts objective_at(const Image& x_hat, const Image& r_hat) {
        const Image kx = conv2d_circular_fft(x_hat, k_hat_);
        const Image h = idct2(v_);
        double data = 0.0;
        for (std::size_t i = 0; i < y_.pix.size(); ++i) {
            const double d = y_.pix[i] - kx.pix[i] - r_hat.pix[i] - h.pix[i];
            data += d * d;
        }
        ObjectiveParts p;
        p.data = data;
        p.tv = cfg_.lambda1 * tv_value(x_hat);
        p.r_l1 = use_r_ ? cfg_.lambda2 * l1_of(r_hat) : 0.0;
        p.v_l1 = cfg_.lambda3 * l1_of(v_);
        p.total = p.data + p.tv + p.r_l1 + p.v_l1;
        ensure_finite(p.total, "objective");
        return p;
    }

    void apply_adam(Generator& g, AdamState& st, double lr, const Tape& tape) {
        std::vector<std::span<double>> ps;
        std::vector<std::span<const double>> gs;
        auto add_param = [&](Param& p) {
            require(p.node >= 0, "parameter missing from graph");
            ps.emplace_back(p.value->data(), p.value->size());
            const auto& grad = tape.grad(p.node);
            gs.emplace_back(grad.data(), grad.size());
        };
        if (g.kind() == Generator::Kind::Net)
            for (auto& p : g.net()->params()) add_param(p);
        else
            add_param(g.free_param());
        adam_step(ps, gs, st, lr);
    }

    Image y_;
    Kernel k_hat_;
    SolverConfig cfg_;
    Generator image_gen_, residual_gen_;
    bool use_r_ = true;
    AdamState adam_image_, adam_residual_;
    Image v_;
    int iter_ = 0;
    std::vector<LossRecord> trace_;
    Image x_cache_, r_cache_, kx_cache_;
    bool cached_ = false;
};

inline SolverResult run_solver(const Image& y, const Kernel& k_hat, const SolverConfig& cfg) {
    Solver s(y, k_hat, cfg);
    return s.run();
}

inline SolverResult run_ablation(const Image& y, const Kernel& k_hat, SolverConfig cfg,
                                 AblationMode mode) {
    cfg.ablation = mode;
    Solver s(y, k_hat, cfg);
    return s.run();
}

} // namespace sbd
