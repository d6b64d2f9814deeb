#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sbd/adam.hpp"
#include "sbd/common.hpp"
#include "sbd/ops.hpp"
#include "sbd/tensor.hpp"

// Untrained encoder-decoder generators. The image branch ends in a sigmoid,
// the residual branch in a soft-shrinkage head; both map a fixed random noise
// tensor to a full-resolution output and are optimized per instance, never
// trained on data.
//
// Topology per encoder level: [conv3x3/s2 + norm + lrelu], [conv3x3/s1 +
// norm + lrelu]. Skips are 1x1 convs (+ norm); skip 0 is taken from the
// network input, skip i>0 from encoder level i-1, so each decoder stage
// concatenates a skip at its own resolution. Decoder stages: bilinear 2x
// upsample, concat skip, two [conv3x3 + norm + lrelu]. Head: conv1x1 +
// activation, no norm. Convs followed by a norm carry no bias (the norm
// would cancel it exactly, leaving a dead parameter).

namespace sbd {

enum class HeadKind { Sigmoid, SoftShrink };

struct NetConfig {
    int input_channels = 16;
    int depth = 4;
    std::vector<int> encoder_channels = {16, 32, 64, 128};
    std::vector<int> skip_channels = {4, 4, 4, 4};
    double activation_slope = 0.2;
    HeadKind head = HeadKind::Sigmoid;
    double head_delta = 0.01; // soft-shrinkage threshold (fixed, not learned)
    double input_sigma = 0.1;
    bool use_norm = true; // per-channel instance normalization after each conv
    // scale on the head-conv init: the image branch starts near mid-gray and
    // the residual branch near zero, so neither output swamps the data term
    // before optimization sorts the branches out
    double head_init_gain = 0.05;
    std::uint64_t init_seed = 0;

    void validate() const {
        require(input_channels >= 1, "net: input_channels must be >= 1");
        require(depth >= 1, "net: depth must be >= 1");
        require(static_cast<int>(encoder_channels.size()) == depth,
                "net: encoder_channels must have one entry per level");
        require(static_cast<int>(skip_channels.size()) == depth,
                "net: skip_channels must have one entry per level");
        for (int c : encoder_channels) require(c >= 1, "net: channel counts must be >= 1");
        for (int c : skip_channels) require(c >= 0, "net: skip channels must be >= 0");
        require(head_delta >= 0.0, "net: head_delta must be >= 0");
        require(input_sigma > 0.0, "net: input sigma must be positive");
    }
};

struct Param {
    std::string name;
    Shape shape;
    std::shared_ptr<std::vector<double>> value;
    int node = -1; // leaf id on the current tape, -1 between iterations

    std::size_t size() const { return value->size(); }
};

// i.i.d. Gaussian(0, sigma^2) tensor; sampled exactly once per run per network.
inline Tensor sample_noise_input(int channels, int h, int w, double sigma, std::uint64_t seed) {
    require(sigma > 0.0, "sample_noise_input: sigma must be positive");
    Shape s{channels, h, w};
    const std::size_t n = numel(s);
    auto data = std::make_shared<std::vector<double>>(n);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, sigma);
    for (double& v : *data) v = dist(rng);
    return Tensor(std::move(s), std::move(data));
}

class Network {
public:
    Network(NetConfig cfg, int out_channels, int h, int w)
        : cfg_(std::move(cfg)), out_channels_(out_channels), h_(h), w_(w) {
        cfg_.validate();
        require(out_channels == 1 || out_channels == 3, "net: output channels must be 1 or 3");
        const int f = 1 << cfg_.depth;
        require(h % f == 0 && w % f == 0,
                "net: spatial dims must be divisible by 2^depth (got " + std::to_string(h) + "x" +
                    std::to_string(w) + " for depth " + std::to_string(cfg_.depth) + ")");
        init_params();
        fixed_input_ =
            sample_noise_input(cfg_.input_channels, h, w, cfg_.input_sigma, mix_seed(cfg_.init_seed, 1));
    }

    const NetConfig& config() const { return cfg_; }
    int out_channels() const { return out_channels_; }
    std::vector<Param>& params() { return params_; }
    const std::vector<Param>& params() const { return params_; }
    const Tensor& fixed_input() const { return fixed_input_; }

    // Tests may capture the pre-head activation to probe the head's zero set.
    void set_capture_preactivation(bool on) { capture_preact_ = on; }
    const std::vector<double>& last_preactivation() const { return last_preact_; }

    // Forward pass from the fixed input. With a tape, parameters are
    // registered as leaves and the output is tracked; without one this is a
    // plain evaluation.
    Tensor forward(Tape* tape) {
        for (auto& p : params_) p.node = -1;
        auto P = [&](int idx) -> Tensor {
            Param& p = params_[static_cast<std::size_t>(idx)];
            if (!tape) return Tensor(p.shape, p.value);
            Tensor t(p.shape, p.value, tape, tape->leaf(p.size()));
            p.node = t.node;
            return t;
        };
        int pi = 0;
        // one conv block: conv (+ optional norm), then leaky-ReLU if act
        auto block = [&](const Tensor& in, int stride, int pad, bool act) {
            Tensor out;
            if (cfg_.use_norm) {
                Tensor w = P(pi++);
                out = conv2d(in, w, stride, pad);
                Tensor g = P(pi++), b = P(pi++);
                out = instance_norm(out, g, b);
            } else {
                Tensor w = P(pi++), b = P(pi++);
                out = conv2d(in, w, b, stride, pad);
            }
            return act ? leaky_relu(out, cfg_.activation_slope) : out;
        };

        Tensor x = fixed_input_;
        std::vector<Tensor> enc;
        enc.reserve(cfg_.depth);
        for (int lvl = 0; lvl < cfg_.depth; ++lvl) {
            x = block(x, 2, 1, true);
            x = block(x, 1, 1, true);
            enc.push_back(x);
        }
        std::vector<Tensor> skips(static_cast<std::size_t>(cfg_.depth));
        for (int lvl = 0; lvl < cfg_.depth; ++lvl) {
            if (cfg_.skip_channels[lvl] == 0) continue;
            const Tensor& src = lvl == 0 ? fixed_input_ : enc[static_cast<std::size_t>(lvl - 1)];
            skips[static_cast<std::size_t>(lvl)] = block(src, 1, 0, false);
        }
        Tensor d = enc.back();
        for (int lvl = cfg_.depth - 1; lvl >= 0; --lvl) {
            d = upsample2x_bilinear(d);
            if (cfg_.skip_channels[lvl] > 0)
                d = concat_channels(d, skips[static_cast<std::size_t>(lvl)]);
            d = block(d, 1, 1, true);
            d = block(d, 1, 1, true);
        }
        Tensor wh = P(pi++), bh = P(pi++);
        Tensor pre = conv2d(d, wh, bh, 1, 0);
        require(pi == static_cast<int>(params_.size()), "net: parameter walk out of sync");
        if (capture_preact_) last_preact_ = pre.values();
        switch (cfg_.head) {
            case HeadKind::Sigmoid: return sigmoid(pre);
            case HeadKind::SoftShrink: return soft_shrink(pre, cfg_.head_delta);
        }
        fail("unknown head kind");
    }

private:
    // decoder stage output widths mirror the encoder
    int dec_out_channels(int lvl) const {
        return lvl == 0 ? cfg_.encoder_channels[0] : cfg_.encoder_channels[lvl - 1];
    }

    void add_block(std::mt19937_64& rng, const std::string& name, int co, int ci, int kh, int kw,
                   bool with_norm, double gain_scale = 1.0) {
        // fan-in-scaled uniform init with the leaky-ReLU gain
        const double fan_in = static_cast<double>(ci) * kh * kw;
        const double gain2 = 2.0 / (1.0 + cfg_.activation_slope * cfg_.activation_slope);
        const double wb = gain_scale * std::sqrt(3.0 * gain2 / fan_in);
        std::uniform_real_distribution<double> uw(-wb, wb);
        Param w{name + ".w", Shape{co, ci, kh, kw},
                std::make_shared<std::vector<double>>(static_cast<std::size_t>(co) * ci * kh * kw),
                -1};
        for (double& v : *w.value) v = uw(rng);
        params_.push_back(std::move(w));
        if (with_norm) {
            params_.push_back(Param{name + ".norm.g", Shape{co},
                                    std::make_shared<std::vector<double>>(co, 1.0), -1});
            params_.push_back(Param{name + ".norm.b", Shape{co},
                                    std::make_shared<std::vector<double>>(co, 0.0), -1});
        } else {
            const double bb = gain_scale / std::sqrt(fan_in);
            std::uniform_real_distribution<double> ub(-bb, bb);
            Param b{name + ".b", Shape{co}, std::make_shared<std::vector<double>>(co), -1};
            for (double& v : *b.value) v = ub(rng);
            params_.push_back(std::move(b));
        }
    }

    void init_params() {
        std::mt19937_64 rng(mix_seed(cfg_.init_seed, 0));
        const bool norm = cfg_.use_norm;
        int in_ch = cfg_.input_channels;
        for (int lvl = 0; lvl < cfg_.depth; ++lvl) {
            const int ch = cfg_.encoder_channels[lvl];
            add_block(rng, "enc" + std::to_string(lvl) + ".c1", ch, in_ch, 3, 3, norm);
            add_block(rng, "enc" + std::to_string(lvl) + ".c2", ch, ch, 3, 3, norm);
            in_ch = ch;
        }
        for (int lvl = 0; lvl < cfg_.depth; ++lvl) {
            if (cfg_.skip_channels[lvl] == 0) continue;
            const int src = lvl == 0 ? cfg_.input_channels : cfg_.encoder_channels[lvl - 1];
            add_block(rng, "skip" + std::to_string(lvl), cfg_.skip_channels[lvl], src, 1, 1, norm);
        }
        int ch = cfg_.encoder_channels[cfg_.depth - 1];
        for (int lvl = cfg_.depth - 1; lvl >= 0; --lvl) {
            const int in_c = ch + cfg_.skip_channels[lvl];
            const int out_c = dec_out_channels(lvl);
            add_block(rng, "dec" + std::to_string(lvl) + ".c1", out_c, in_c, 3, 3, norm);
            add_block(rng, "dec" + std::to_string(lvl) + ".c2", out_c, out_c, 3, 3, norm);
            ch = out_c;
        }
        add_block(rng, "head", out_channels_, ch, 1, 1, false, cfg_.head_init_gain);
    }

    NetConfig cfg_;
    int out_channels_;
    int h_, w_;
    std::vector<Param> params_;
    Tensor fixed_input_;
    bool capture_preact_ = false;
    std::vector<double> last_preact_;
};

inline Network build_net(const NetConfig& cfg, int h, int w, int out_channels = 1) {
    return Network(cfg, out_channels, h, w);
}

} // namespace sbd
