#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "sbd/common.hpp"
#include "sbd/image.hpp"

// Reverse-mode autodiff over a tape of primitive operations. The tape is the
// GradGraph: node creation order is the topological order, one backward pass
// populates a gradient for every node reachable from the loss. A tape serves
// one forward/backward round and is cleared (or discarded) afterwards; it is
// owned by exactly one optimization run.

namespace sbd {

class Tape;

struct Tensor {
    Shape shape;
    std::shared_ptr<std::vector<double>> data;
    Tape* tape = nullptr;
    int node = -1;

    Tensor() = default;
    Tensor(Shape s, std::shared_ptr<std::vector<double>> d, Tape* t = nullptr, int n = -1)
        : shape(std::move(s)), data(std::move(d)), tape(t), node(n) {}

    static Tensor from(Shape s, std::vector<double> values) {
        require(numel(s) == values.size(), "tensor data does not match shape");
        ensure_finite(values, "tensor");
        return Tensor(std::move(s), std::make_shared<std::vector<double>>(std::move(values)));
    }

    static Tensor zeros(Shape s) {
        const std::size_t n = numel(s);
        return Tensor(std::move(s), std::make_shared<std::vector<double>>(n, 0.0));
    }

    static Tensor full(Shape s, double v) {
        const std::size_t n = numel(s);
        return Tensor(std::move(s), std::make_shared<std::vector<double>>(n, v));
    }

    std::size_t size() const { return data ? data->size() : 0; }
    bool tracked() const { return tape != nullptr && node >= 0; }

    const std::vector<double>& values() const { return *data; }
    std::vector<double>& values() { return *data; }

    double scalar() const {
        require(size() == 1, "expected scalar tensor, got shape " + shape_str(shape));
        return (*data)[0];
    }
};

class Tape {
public:
    // Leaf with gradient storage (a tracked parameter or input).
    int leaf(std::size_t n) {
        nodes_.push_back(Node{nullptr, std::vector<double>(n, 0.0), false});
        return static_cast<int>(nodes_.size()) - 1;
    }

    // Interior node; `back` pulls this node's gradient and accumulates into
    // its inputs' gradients.
    int node(std::size_t n, std::function<void(Tape&)> back) {
        nodes_.push_back(Node{std::move(back), std::vector<double>(n, 0.0), false});
        return static_cast<int>(nodes_.size()) - 1;
    }

    std::size_t size() const { return nodes_.size(); }

    const std::vector<double>& grad(int id) const { return nodes_.at(id).grad; }

    // Mutable gradient access for accumulation; marks the node as reached.
    std::vector<double>& grad_acc(int id) {
        Node& nd = nodes_.at(id);
        nd.reached = true;
        return nd.grad;
    }

    bool reached(int id) const { return nodes_.at(id).reached; }

    // Reverse sweep from a scalar loss. Single-use: the tape must be cleared
    // before the next forward pass.
    void backward(const Tensor& loss) {
        require(loss.tape == this && loss.tracked(), "backward: loss not recorded on this tape");
        require(loss.size() == 1, "backward: loss must be scalar");
        require(!consumed_, "backward: graph already consumed");
        consumed_ = true;
        grad_acc(loss.node)[0] = 1.0;
        for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
            Node& nd = nodes_[static_cast<std::size_t>(id)];
            if (nd.reached && nd.back) nd.back(*this);
        }
    }

    void clear() {
        nodes_.clear();
        consumed_ = false;
    }

private:
    struct Node {
        std::function<void(Tape&)> back;
        std::vector<double> grad;
        bool reached = false;
    };
    std::vector<Node> nodes_;
    bool consumed_ = false;
};

// Registers `t` as a tracked leaf on the tape and returns the tracked handle.
inline Tensor track_leaf(Tape& tape, const Tensor& t) {
    Tensor out = t;
    out.tape = &tape;
    out.node = tape.leaf(t.size());
    return out;
}

namespace detail {

inline Tape* joint_tape(const Tensor& a, const Tensor& b) {
    if (a.tracked() && b.tracked()) {
        require(a.tape == b.tape, "operands recorded on different tapes");
        return a.tape;
    }
    if (a.tracked()) return a.tape;
    if (b.tracked()) return b.tape;
    return nullptr;
}

} // namespace detail

// --- Tensor/Image interop (tensors holding images use shape {C,H,W}) ---

inline Tensor to_tensor(const Image& im) {
    return Tensor::from({im.channels, im.height, im.width}, im.pix);
}

inline Image to_image(const Tensor& t) {
    require(t.shape.size() == 3, "to_image: expected rank-3 tensor");
    Image im(t.shape[0], t.shape[1], t.shape[2]);
    im.pix = t.values();
    return im;
}

} // namespace sbd
