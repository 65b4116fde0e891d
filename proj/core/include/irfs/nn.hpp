#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "irfs/autograd.hpp"
#include "irfs/rng.hpp"

namespace irfs::nn {

/// Named trainable tensors of a network, in registration order.
class ParamRegistry {
public:
    void add(const std::string& name, ag::Var v);
    const std::vector<std::pair<std::string, ag::Var>>& items() const { return items_; }
    std::vector<ag::Var> vars() const;
    int64_t count_scalars() const;

    void zero_grads();
    void set_trainable(bool trainable);
    /// Order-sensitive FNV-1a hash over the raw parameter bytes.
    uint64_t checksum() const;

private:
    std::vector<std::pair<std::string, ag::Var>> items_;
};

Tensor init_conv_weight(Rng& rng, int64_t co, int64_t ci, int64_t k);
Tensor init_linear_weight(Rng& rng, int64_t m, int64_t n);

struct Conv2d {
    ag::Var w, b;
    int stride = 1, pad = 0, dilation = 1;

    static Conv2d make(Rng& rng, int64_t ci, int64_t co, int64_t k, int stride = 1, int pad = 0,
                       int dilation = 1, bool bias = true);
    ag::Var operator()(const ag::Var& x) const { return ag::conv2d(x, w, b, stride, pad, dilation); }
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

struct Linear {
    ag::Var w, b;

    static Linear make(Rng& rng, int64_t in, int64_t out, bool bias = true);
    ag::Var operator()(const ag::Var& x) const { return ag::linear(x, w, b); }
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

/// Per-sample, per-channel spatial normalization with learned affine;
/// the normalization used inside CBR blocks.
struct ChannelNorm {
    ag::Var gamma, beta;
    double eps = 1e-5;

    static ChannelNorm make(int64_t c);
    ag::Var operator()(const ag::Var& x) const { return ag::channel_norm(x, gamma, beta, eps); }
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

/// Adam with bias correction. State is serializable for resumable training.
class Adam {
public:
    Adam(std::vector<ag::Var> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8);

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    void step();
    void zero_grads();
    int64_t t() const { return t_; }

    // state access for checkpointing
    const std::vector<Tensor>& m_state() const { return m_; }
    const std::vector<Tensor>& v_state() const { return v_; }
    void restore_state(int64_t t, std::vector<Tensor> m, std::vector<Tensor> v);

private:
    std::vector<ag::Var> params_;
    std::vector<Tensor> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
};

} // namespace irfs::nn
