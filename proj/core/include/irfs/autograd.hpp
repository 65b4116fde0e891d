#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "irfs/tensor.hpp"

namespace irfs::ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the define-by-run tape.
struct Node {
    Tensor value;
    Tensor grad; // allocated lazily during backward
    bool requires_grad = false;
    std::vector<NodePtr> inputs;
    std::function<void(Node&)> backward_fn; // accumulates into inputs' grads
    const char* op = "leaf";
};

/// Cheap handle over a tape node. Copying shares the node.
class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : n_(std::move(n)) {}

    /// New leaf holding `v`; trainable iff `requires_grad`.
    static Var leaf(Tensor v, bool requires_grad = false);
    /// Constant leaf (no gradient ever).
    static Var constant(Tensor v) { return leaf(std::move(v), false); }

    bool defined() const { return n_ != nullptr; }
    const Tensor& value() const { return n_->value; }
    Tensor& value() { return n_->value; }
    Tensor& grad() { return n_->grad; }
    const Tensor& grad() const { return n_->grad; }
    bool has_grad() const { return n_->grad.defined(); }
    bool requires_grad() const { return n_ && n_->requires_grad; }
    void set_requires_grad(bool rg) { n_->requires_grad = rg; }
    void zero_grad() { n_->grad = Tensor(); }
    NodePtr node() const { return n_; }

    double scalar() const { return n_->value[0]; }

private:
    NodePtr n_;
};

// ---- graph construction -------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);          // elementwise
Var div(const Var& a, const Var& b);          // elementwise
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var neg(const Var& a);

Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var sigmoid(const Var& a);
Var tanh_op(const Var& a);
Var log_op(const Var& a);
Var abs_op(const Var& a);
Var sqrt_op(const Var& a);
Var clamp(const Var& a, double lo, double hi);
Var pow_scalar(const Var& a, double e); // requires positive base values

Var sum(const Var& a);   // -> scalar {1}
Var mean(const Var& a);  // -> scalar {1}
Var reshape(const Var& a, std::vector<int64_t> shape);

/// 2-D matmul: (M,K) x (K,N) -> (M,N).
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a); // 2-D

/// 2-D convolution on CHW tensors. w: (Co, Ci, k, k); optional bias (Co).
/// Zero padding `pad`, square stride/dilation.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad, int dilation = 1);

/// Fused scaled sigmoid attention over token matrices:
/// A = sigmoid(q k^T * scale), returns A v. q,k,v: (T, C); out: (T, C).
Var attention_sigmoid(const Var& q, const Var& k, const Var& v, double scale);

Var concat_ch(const std::vector<Var>& xs);       // CHW along C
Var slice_ch(const Var& x, int64_t c0, int64_t c1);

Var global_avg_pool(const Var& x); // (C,H,W) -> (C)
Var global_max_pool(const Var& x); // (C,H,W) -> (C)
Var channel_mean(const Var& x);    // (C,H,W) -> (1,H,W)
Var channel_max(const Var& x);     // (C,H,W) -> (1,H,W)
Var avg_pool2x2(const Var& x);     // stride-2 window-2 (floor sizes)
Var max_pool2d(const Var& x, int k, int stride, int pad);

/// Broadcast ops used by attention gates and channel reweighting.
Var mul_map(const Var& x, const Var& gate);      // (C,H,W) * (1,H,W)
Var scale_channels(const Var& x, const Var& w);  // (C,H,W) * (C)

/// Per-channel standardization over the spatial extent plus learned affine.
Var channel_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

Var upsample_bilinear(const Var& x, int64_t out_h, int64_t out_w); // align_corners=false
Var pad_reflect(const Var& x, int p);

/// (C,H,W) -> (H*W, C) token matrix and back.
Var to_tokens(const Var& x);
Var from_tokens(const Var& t, int64_t c, int64_t h, int64_t w);

/// Identity forward, blocks gradient flow.
Var stop_gradient(const Var& x);

/// Linear layer y = W x + b for vectors. W: (M,N), x: (N), b: (M) (optional).
Var linear(const Var& x, const Var& w, const Var& b);

// ---- execution -----------------------------------------------------------

/// Reverse-mode sweep from a scalar root. Accumulates into leaf grads
/// (call zero_grad on parameters between optimizer steps).
void backward(const Var& root);

} // namespace irfs::ag
