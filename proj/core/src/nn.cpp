#include "irfs/nn.hpp"

#include <cmath>
#include <cstring>

namespace irfs::nn {

void ParamRegistry::add(const std::string& name, ag::Var v) {
    v.set_requires_grad(true);
    items_.emplace_back(name, std::move(v));
}

std::vector<ag::Var> ParamRegistry::vars() const {
    std::vector<ag::Var> out;
    out.reserve(items_.size());
    for (const auto& [_, v] : items_) out.push_back(v);
    return out;
}

int64_t ParamRegistry::count_scalars() const {
    int64_t n = 0;
    for (const auto& [_, v] : items_) n += v.value().numel();
    return n;
}

void ParamRegistry::zero_grads() {
    for (auto& [_, v] : items_) const_cast<ag::Var&>(v).zero_grad();
}

void ParamRegistry::set_trainable(bool trainable) {
    for (auto& [_, v] : items_) const_cast<ag::Var&>(v).set_requires_grad(trainable);
}

uint64_t ParamRegistry::checksum() const {
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const void* p, size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& [name, v] : items_) {
        mix(name.data(), name.size());
        mix(v.value().data(), size_t(v.value().numel()) * sizeof(double));
    }
    return h;
}

Tensor init_conv_weight(Rng& rng, int64_t co, int64_t ci, int64_t k) {
    Tensor w({co, ci, k, k});
    const double s = std::sqrt(1.0 / double(ci * k * k));
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-s, s);
    return w;
}

Tensor init_linear_weight(Rng& rng, int64_t m, int64_t n) {
    Tensor w({m, n});
    const double s = std::sqrt(1.0 / double(n));
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-s, s);
    return w;
}

Conv2d Conv2d::make(Rng& rng, int64_t ci, int64_t co, int64_t k, int stride, int pad, int dilation,
                    bool bias) {
    Conv2d c;
    c.w = ag::Var::leaf(init_conv_weight(rng, co, ci, k), true);
    if (bias) c.b = ag::Var::leaf(Tensor::zeros({co}), true);
    c.stride = stride;
    c.pad = pad;
    c.dilation = dilation;
    return c;
}

void Conv2d::register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".w", w);
    if (b.defined()) reg.add(prefix + ".b", b);
}

Linear Linear::make(Rng& rng, int64_t in, int64_t out, bool bias) {
    Linear l;
    l.w = ag::Var::leaf(init_linear_weight(rng, out, in), true);
    if (bias) l.b = ag::Var::leaf(Tensor::zeros({out}), true);
    return l;
}

void Linear::register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".w", w);
    if (b.defined()) reg.add(prefix + ".b", b);
}

ChannelNorm ChannelNorm::make(int64_t c) {
    ChannelNorm n;
    n.gamma = ag::Var::leaf(Tensor::full({c}, 1.0), true);
    n.beta = ag::Var::leaf(Tensor::zeros({c}), true);
    return n;
}

void ChannelNorm::register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".gamma", gamma);
    reg.add(prefix + ".beta", beta);
}

Adam::Adam(std::vector<ag::Var> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(Tensor::zeros(p.value().shape()));
        v_.emplace_back(Tensor::zeros(p.value().shape()));
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (!p.has_grad()) continue;
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        const Tensor& g = p.grad();
        Tensor& w = p.value();
        for (int64_t j = 0; j < w.numel(); ++j) {
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
            const double mh = m[j] / bc1;
            const double vh = v[j] / bc2;
            w[j] -= lr_ * mh / (std::sqrt(vh) + eps_);
        }
    }
}

void Adam::zero_grads() {
    for (auto& p : params_) p.zero_grad();
}

void Adam::restore_state(int64_t t, std::vector<Tensor> m, std::vector<Tensor> v) {
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
}

} // namespace irfs::nn
