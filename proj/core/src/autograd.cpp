#include "irfs/autograd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace irfs::ag {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

namespace {

NodePtr make_node(const char* op, Tensor value, std::vector<NodePtr> inputs,
                  std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->value = std::move(value);
    n->inputs = std::move(inputs);
    n->backward_fn = std::move(backward_fn);
    for (const auto& in : n->inputs)
        if (in->requires_grad) {
            n->requires_grad = true;
            break;
        }
    return n;
}

void ensure_grad(Node& n) {
    if (!n.grad.defined()) n.grad = Tensor::zeros(n.value.shape());
}

// accumulate t into the grad of `in` if it participates in the sweep
void accum(const NodePtr& in, const Tensor& t) {
    if (!in->requires_grad) return;
    ensure_grad(*in);
    in->grad += t;
}

bool wants(const NodePtr& in) { return in->requires_grad; }

} // namespace

Var Var::leaf(Tensor v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
}

// ---- elementwise ----------------------------------------------------------

namespace {

template <typename FwdFn, typename BwdFn>
Var unary_op(const char* op, const Var& a, FwdFn fwd, BwdFn dfd) {
    Tensor out(a.value().shape());
    const Tensor& x = a.value();
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = fwd(x[i]);
    auto an = a.node();
    auto n = make_node(op, std::move(out), {an}, [an, dfd](Node& self) {
        if (!wants(an)) return;
        ensure_grad(*an);
        const Tensor& x = an->value;
        const Tensor& y = self.value;
        for (int64_t i = 0; i < x.numel(); ++i) an->grad[i] += self.grad[i] * dfd(x[i], y[i]);
    });
    return Var(n);
}

} // namespace

Var add(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value() + b.value();
    auto an = a.node(), bn = b.node();
    return Var(make_node("add", std::move(out), {an, bn}, [an, bn](Node& self) {
        accum(an, self.grad);
        accum(bn, self.grad);
    }));
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value() - b.value();
    auto an = a.node(), bn = b.node();
    return Var(make_node("sub", std::move(out), {an, bn}, [an, bn](Node& self) {
        accum(an, self.grad);
        if (wants(bn)) {
            ensure_grad(*bn);
            for (int64_t i = 0; i < self.grad.numel(); ++i) bn->grad[i] -= self.grad[i];
        }
    }));
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "mul");
    Tensor out = hadamard(a.value(), b.value());
    auto an = a.node(), bn = b.node();
    return Var(make_node("mul", std::move(out), {an, bn}, [an, bn](Node& self) {
        if (wants(an)) {
            ensure_grad(*an);
            for (int64_t i = 0; i < self.grad.numel(); ++i)
                an->grad[i] += self.grad[i] * bn->value[i];
        }
        if (wants(bn)) {
            ensure_grad(*bn);
            for (int64_t i = 0; i < self.grad.numel(); ++i)
                bn->grad[i] += self.grad[i] * an->value[i];
        }
    }));
}

Var div(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "div");
    Tensor out(a.value().shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] / b.value()[i];
    auto an = a.node(), bn = b.node();
    return Var(make_node("div", std::move(out), {an, bn}, [an, bn](Node& self) {
        if (wants(an)) {
            ensure_grad(*an);
            for (int64_t i = 0; i < self.grad.numel(); ++i)
                an->grad[i] += self.grad[i] / bn->value[i];
        }
        if (wants(bn)) {
            ensure_grad(*bn);
            for (int64_t i = 0; i < self.grad.numel(); ++i) {
                const double bv = bn->value[i];
                bn->grad[i] -= self.grad[i] * an->value[i] / (bv * bv);
            }
        }
    }));
}

Var add_scalar(const Var& a, double s) {
    return unary_op("add_scalar", a, [s](double x) { return x + s; },
                    [](double, double) { return 1.0; });
}

Var mul_scalar(const Var& a, double s) {
    return unary_op("mul_scalar", a, [s](double x) { return x * s; },
                    [s](double, double) { return s; });
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var relu(const Var& a) {
    return unary_op("relu", a, [](double x) { return x > 0 ? x : 0.0; },
                    [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, double slope) {
    return unary_op("leaky_relu", a, [slope](double x) { return x > 0 ? x : slope * x; },
                    [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Var sigmoid(const Var& a) {
    return unary_op("sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                    [](double, double y) { return y * (1.0 - y); });
}

Var tanh_op(const Var& a) {
    return unary_op("tanh", a, [](double x) { return std::tanh(x); },
                    [](double, double y) { return 1.0 - y * y; });
}

Var log_op(const Var& a) {
    return unary_op("log", a, [](double x) { return std::log(x); },
                    [](double x, double) { return 1.0 / x; });
}

Var abs_op(const Var& a) {
    return unary_op("abs", a, [](double x) { return std::fabs(x); },
                    [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var sqrt_op(const Var& a) {
    return unary_op("sqrt", a, [](double x) { return std::sqrt(x); },
                    [](double, double y) { return 0.5 / y; });
}

Var clamp(const Var& a, double lo, double hi) {
    return unary_op("clamp", a,
                    [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
                    [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var pow_scalar(const Var& a, double e) {
    return unary_op("pow", a, [e](double x) { return std::pow(x, e); },
                    [e](double x, double) { return e * std::pow(x, e - 1.0); });
}

// ---- reductions / shape ----------------------------------------------------

Var sum(const Var& a) {
    Tensor out({1}, a.value().sum());
    auto an = a.node();
    return Var(make_node("sum", std::move(out), {an}, [an](Node& self) {
        if (!wants(an)) return;
        ensure_grad(*an);
        const double g = self.grad[0];
        for (int64_t i = 0; i < an->grad.numel(); ++i) an->grad[i] += g;
    }));
}

Var mean(const Var& a) {
    const double inv = 1.0 / double(a.value().numel());
    Tensor out({1}, a.value().sum() * inv);
    auto an = a.node();
    return Var(make_node("mean", std::move(out), {an}, [an, inv](Node& self) {
        if (!wants(an)) return;
        ensure_grad(*an);
        const double g = self.grad[0] * inv;
        for (int64_t i = 0; i < an->grad.numel(); ++i) an->grad[i] += g;
    }));
}

Var reshape(const Var& a, std::vector<int64_t> shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    auto an = a.node();
    return Var(make_node("reshape", std::move(out), {an}, [an](Node& self) {
        if (!wants(an)) return;
        ensure_grad(*an);
        for (int64_t i = 0; i < an->grad.numel(); ++i) an->grad[i] += self.grad[i];
    }));
}

Var to_tokens(const Var& x) {
    const auto& s = x.value().shape();
    const int64_t c = s[0], hw = s[1] * s[2];
    Tensor out({hw, c});
    const Tensor& v = x.value();
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t p = 0; p < hw; ++p) out.at(p, ch) = v[ch * hw + p];
    auto xn = x.node();
    return Var(make_node("to_tokens", std::move(out), {xn}, [xn, c, hw](Node& self) {
        if (!wants(xn)) return;
        ensure_grad(*xn);
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t p = 0; p < hw; ++p) xn->grad[ch * hw + p] += self.grad.at(p, ch);
    }));
}

Var from_tokens(const Var& t, int64_t c, int64_t h, int64_t w) {
    const int64_t hw = h * w;
    Tensor out({c, h, w});
    const Tensor& v = t.value();
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t p = 0; p < hw; ++p) out[ch * hw + p] = v.at(p, ch);
    auto tn = t.node();
    return Var(make_node("from_tokens", std::move(out), {tn}, [tn, c, hw](Node& self) {
        if (!wants(tn)) return;
        ensure_grad(*tn);
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t p = 0; p < hw; ++p) tn->grad.at(p, ch) += self.grad[ch * hw + p];
    }));
}

Var stop_gradient(const Var& x) {
    auto n = std::make_shared<Node>();
    n->op = "stop_gradient";
    n->value = x.value();
    n->requires_grad = false;
    return Var(std::move(n));
}

// ---- linear algebra --------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    const auto& sa = a.value().shape();
    const auto& sb = b.value().shape();
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
        throw ShapeError("matmul: incompatible shapes " + a.value().shape_str() + " x " +
                         b.value().shape_str());
    Tensor out({sa[0], sb[1]});
    {
        CMapM ma(a.value().data(), sa[0], sa[1]);
        CMapM mb(b.value().data(), sb[0], sb[1]);
        MapM mo(out.data(), sa[0], sb[1]);
        mo.noalias() = ma * mb;
    }
    auto an = a.node(), bn = b.node();
    return Var(make_node("matmul", std::move(out), {an, bn}, [an, bn](Node& self) {
        const auto& sa = an->value.shape();
        const auto& sb = bn->value.shape();
        CMapM g(self.grad.data(), sa[0], sb[1]);
        if (wants(an)) {
            ensure_grad(*an);
            CMapM mb(bn->value.data(), sb[0], sb[1]);
            MapM ga(an->grad.data(), sa[0], sa[1]);
            ga.noalias() += g * mb.transpose();
        }
        if (wants(bn)) {
            ensure_grad(*bn);
            CMapM ma(an->value.data(), sa[0], sa[1]);
            MapM gb(bn->grad.data(), sb[0], sb[1]);
            gb.noalias() += ma.transpose() * g;
        }
    }));
}

Var transpose(const Var& a) {
    const auto& s = a.value().shape();
    Tensor out({s[1], s[0]});
    CMapM ma(a.value().data(), s[0], s[1]);
    MapM mo(out.data(), s[1], s[0]);
    mo = ma.transpose();
    auto an = a.node();
    return Var(make_node("transpose", std::move(out), {an}, [an](Node& self) {
        if (!wants(an)) return;
        ensure_grad(*an);
        const auto& s = an->value.shape();
        CMapM g(self.grad.data(), s[1], s[0]);
        MapM ga(an->grad.data(), s[0], s[1]);
        ga.noalias() += g.transpose();
    }));
}

Var linear(const Var& x, const Var& w, const Var& b) {
    const auto& sw = w.value().shape();
    const auto& sx = x.value().shape();
    if (sx.size() != 1 || sw.size() != 2 || sw[1] != sx[0])
        throw ShapeError("linear: shape mismatch");
    Tensor out({sw[0]});
    CMapM mw(w.value().data(), sw[0], sw[1]);
    Eigen::Map<const Eigen::VectorXd> vx(x.value().data(), sx[0]);
    Eigen::Map<Eigen::VectorXd> vo(out.data(), sw[0]);
    vo.noalias() = mw * vx;
    if (b.defined()) vo += Eigen::Map<const Eigen::VectorXd>(b.value().data(), sw[0]);

    auto xn = x.node(), wn = w.node();
    auto bn = b.defined() ? b.node() : nullptr;
    std::vector<NodePtr> ins = {xn, wn};
    if (bn) ins.push_back(bn);
    return Var(make_node("linear", std::move(out), std::move(ins), [xn, wn, bn](Node& self) {
        const auto& sw = wn->value.shape();
        Eigen::Map<const Eigen::VectorXd> g(self.grad.data(), sw[0]);
        if (wants(wn)) {
            ensure_grad(*wn);
            MapM gw(wn->grad.data(), sw[0], sw[1]);
            Eigen::Map<const Eigen::VectorXd> vx(xn->value.data(), sw[1]);
            gw.noalias() += g * vx.transpose();
        }
        if (wants(xn)) {
            ensure_grad(*xn);
            CMapM mw(wn->value.data(), sw[0], sw[1]);
            Eigen::Map<Eigen::VectorXd> gx(xn->grad.data(), sw[1]);
            gx.noalias() += mw.transpose() * g;
        }
        if (bn && wants(bn)) {
            ensure_grad(*bn);
            for (int64_t i = 0; i < sw[0]; ++i) bn->grad[i] += self.grad[i];
        }
    }));
}

// ---- convolution -----------------------------------------------------------

namespace {

struct ConvDims {
    int64_t ci, h, w, co, k, ho, wo;
    int stride, pad, dil;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad, int dil) {
    if (x.ndim() != 3 || w.ndim() != 4) throw ShapeError("conv2d expects CHW input and OIKK weight");
    ConvDims d;
    d.ci = x.shape(0);
    d.h = x.shape(1);
    d.w = x.shape(2);
    d.co = w.shape(0);
    d.k = w.shape(2);
    d.stride = stride;
    d.pad = pad;
    d.dil = dil;
    if (w.shape(1) != d.ci)
        throw ShapeError("conv2d: weight expects " + std::to_string(w.shape(1)) +
                         " input channels, got " + std::to_string(d.ci));
    const int64_t eff = d.dil * (d.k - 1) + 1;
    d.ho = (d.h + 2 * pad - eff) / stride + 1;
    d.wo = (d.w + 2 * pad - eff) / stride + 1;
    if (d.ho <= 0 || d.wo <= 0) throw ShapeError("conv2d: kernel larger than padded input");
    return d;
}

Tensor im2col(const Tensor& x, const ConvDims& d) {
    Tensor col({d.ci * d.k * d.k, d.ho * d.wo});
    const double* xd = x.data();
    double* cd = col.data();
    for (int64_t ci = 0; ci < d.ci; ++ci) {
        const double* xc = xd + ci * d.h * d.w;
        for (int64_t ky = 0; ky < d.k; ++ky) {
            for (int64_t kx = 0; kx < d.k; ++kx) {
                double* row = cd + ((ci * d.k + ky) * d.k + kx) * d.ho * d.wo;
                for (int64_t oy = 0; oy < d.ho; ++oy) {
                    const int64_t iy = oy * d.stride - d.pad + ky * d.dil;
                    double* out = row + oy * d.wo;
                    if (iy < 0 || iy >= d.h) {
                        std::fill(out, out + d.wo, 0.0);
                        continue;
                    }
                    const double* xr = xc + iy * d.w;
                    for (int64_t ox = 0; ox < d.wo; ++ox) {
                        const int64_t ix = ox * d.stride - d.pad + kx * d.dil;
                        out[ox] = (ix >= 0 && ix < d.w) ? xr[ix] : 0.0;
                    }
                }
            }
        }
    }
    return col;
}

void col2im_accum(const Tensor& col, const ConvDims& d, Tensor& gx) {
    const double* cd = col.data();
    double* xd = gx.data();
    for (int64_t ci = 0; ci < d.ci; ++ci) {
        double* xc = xd + ci * d.h * d.w;
        for (int64_t ky = 0; ky < d.k; ++ky) {
            for (int64_t kx = 0; kx < d.k; ++kx) {
                const double* row = cd + ((ci * d.k + ky) * d.k + kx) * d.ho * d.wo;
                for (int64_t oy = 0; oy < d.ho; ++oy) {
                    const int64_t iy = oy * d.stride - d.pad + ky * d.dil;
                    if (iy < 0 || iy >= d.h) continue;
                    const double* in = row + oy * d.wo;
                    double* xr = xc + iy * d.w;
                    for (int64_t ox = 0; ox < d.wo; ++ox) {
                        const int64_t ix = ox * d.stride - d.pad + kx * d.dil;
                        if (ix >= 0 && ix < d.w) xr[ix] += in[ox];
                    }
                }
            }
        }
    }
}

} // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad, int dilation) {
    const ConvDims d = conv_dims(x.value(), w.value(), stride, pad, dilation);
    auto col = std::make_shared<Tensor>(im2col(x.value(), d));
    Tensor out({d.co, d.ho, d.wo});
    {
        CMapM mw(w.value().data(), d.co, d.ci * d.k * d.k);
        CMapM mc(col->data(), d.ci * d.k * d.k, d.ho * d.wo);
        MapM mo(out.data(), d.co, d.ho * d.wo);
        mo.noalias() = mw * mc;
        if (b.defined()) {
            for (int64_t co = 0; co < d.co; ++co)
                mo.row(co).array() += b.value()[co];
        }
    }
    auto xn = x.node(), wn = w.node();
    auto bn = b.defined() ? b.node() : nullptr;
    std::vector<NodePtr> ins = {xn, wn};
    if (bn) ins.push_back(bn);
    return Var(make_node("conv2d", std::move(out), std::move(ins), [xn, wn, bn, col, d](Node& self) {
        CMapM g(self.grad.data(), d.co, d.ho * d.wo);
        if (wants(wn)) {
            ensure_grad(*wn);
            CMapM mc(col->data(), d.ci * d.k * d.k, d.ho * d.wo);
            MapM gw(wn->grad.data(), d.co, d.ci * d.k * d.k);
            gw.noalias() += g * mc.transpose();
        }
        if (bn && wants(bn)) {
            ensure_grad(*bn);
            for (int64_t co = 0; co < d.co; ++co) bn->grad[co] += g.row(co).sum();
        }
        if (wants(xn)) {
            ensure_grad(*xn);
            Tensor gcol({d.ci * d.k * d.k, d.ho * d.wo});
            CMapM mw(wn->value.data(), d.co, d.ci * d.k * d.k);
            MapM mgc(gcol.data(), d.ci * d.k * d.k, d.ho * d.wo);
            mgc.noalias() = mw.transpose() * g;
            col2im_accum(gcol, d, xn->grad);
        }
    }));
}

// ---- attention ---------------------------------------------------------------

Var attention_sigmoid(const Var& q, const Var& k, const Var& v, double scale) {
    const auto& sq = q.value().shape();
    const auto& sk = k.value().shape();
    const auto& sv = v.value().shape();
    if (sq.size() != 2 || sk != std::vector<int64_t>{sq[0], sq[1]} || sv != sk)
        throw ShapeError("attention_sigmoid expects three (T,C) matrices of equal shape");
    const int64_t t = sq[0], c = sq[1];

    auto attn = std::make_shared<Tensor>(Tensor({t, t}));
    Tensor out({t, c});
    {
        CMapM mq(q.value().data(), t, c);
        CMapM mk(k.value().data(), t, c);
        CMapM mv(v.value().data(), t, c);
        MapM ma(attn->data(), t, t);
        ma.noalias() = mq * mk.transpose();
        ma = ((ma * -scale).array().exp() + 1.0).inverse().matrix();
        MapM mo(out.data(), t, c);
        mo.noalias() = ma * mv;
    }
    auto qn = q.node(), kn = k.node(), vn = v.node();
    return Var(make_node("attention_sigmoid", std::move(out), {qn, kn, vn},
                         [qn, kn, vn, attn, scale, t, c](Node& self) {
        CMapM g(self.grad.data(), t, c);
        CMapM ma(attn->data(), t, t);
        if (wants(vn)) {
            ensure_grad(*vn);
            MapM gv(vn->grad.data(), t, c);
            gv.noalias() += ma.transpose() * g;
        }
        if (wants(qn) || wants(kn)) {
            Tensor dlog({t, t});
            {
                MapM md(dlog.data(), t, t);
                CMapM mv(vn->value.data(), t, c);
                md.noalias() = g * mv.transpose();
                CMapM ad(attn->data(), t, t);
                md.array() *= ad.array() * (1.0 - ad.array()) * scale;
            }
            CMapM md(dlog.data(), t, t);
            if (wants(qn)) {
                ensure_grad(*qn);
                CMapM mk(kn->value.data(), t, c);
                MapM gq(qn->grad.data(), t, c);
                gq.noalias() += md * mk;
            }
            if (wants(kn)) {
                ensure_grad(*kn);
                CMapM mq(qn->value.data(), t, c);
                MapM gk(kn->grad.data(), t, c);
                gk.noalias() += md.transpose() * mq;
            }
        }
    }));
}

// ---- structured ops ----------------------------------------------------------

Var concat_ch(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat_ch: empty input list");
    const int64_t h = xs[0].value().shape(1), w = xs[0].value().shape(2);
    int64_t ctot = 0;
    for (const auto& x : xs) {
        if (x.value().ndim() != 3 || x.value().shape(1) != h || x.value().shape(2) != w)
            throw ShapeError("concat_ch: spatial mismatch");
        ctot += x.value().shape(0);
    }
    Tensor out({ctot, h, w});
    int64_t off = 0;
    for (const auto& x : xs) {
        std::copy(x.value().data(), x.value().data() + x.value().numel(), out.data() + off);
        off += x.value().numel();
    }
    std::vector<NodePtr> ins;
    ins.reserve(xs.size());
    for (const auto& x : xs) ins.push_back(x.node());
    return Var(make_node("concat_ch", std::move(out), std::move(ins), [](Node& self) {
        int64_t off = 0;
        for (auto& in : self.inputs) {
            const int64_t n = in->value.numel();
            if (wants(in)) {
                ensure_grad(*in);
                for (int64_t i = 0; i < n; ++i) in->grad[i] += self.grad[off + i];
            }
            off += n;
        }
    }));
}

Var slice_ch(const Var& x, int64_t c0, int64_t c1) {
    const auto& s = x.value().shape();
    if (c0 < 0 || c1 > s[0] || c0 >= c1) throw ShapeError("slice_ch: bad channel range");
    const int64_t hw = s[1] * s[2];
    Tensor out({c1 - c0, s[1], s[2]});
    std::copy(x.value().data() + c0 * hw, x.value().data() + c1 * hw, out.data());
    auto xn = x.node();
    return Var(make_node("slice_ch", std::move(out), {xn}, [xn, c0, hw](Node& self) {
        if (!wants(xn)) return;
        ensure_grad(*xn);
        for (int64_t i = 0; i < self.grad.numel(); ++i) xn->grad[c0 * hw + i] += self.grad[i];
    }));
}

Var global_avg_pool(const Var& x) {
    const auto& s = x.value().shape();
    const int64_t c = s[0], hw = s[1] * s[2];
    Tensor out({c});
    for (int64_t ch = 0; ch < c; ++ch) {
        double acc = 0;
        for (int64_t p = 0; p < hw; ++p) acc += x.value()[ch * hw + p];
        out[ch] = acc / double(hw);
    }
    auto xn = x.node();
    return Var(make_node("gap", std::move(out), {xn}, [xn, c, hw](Node& self) {
        if (!wants(xn)) return;
        ensure_grad(*xn);
        for (int64_t ch = 0; ch < c; ++ch) {
            const double g = self.grad[ch] / double(hw);
            for (int64_t p = 0; p < hw; ++p) xn->grad[ch * hw + p] += g;
        }
    }));
}

Var global_max_pool(const Var& x) {
    const auto& s = x.value().shape();
    const int64_t c = s[0], hw = s[1] * s[2];
    Tensor out({c});
    auto argmax = std::make_shared<std::vector<int64_t>>(size_t(c));
    for (int64_t ch = 0; ch < c; ++ch) {
        int64_t best = 0;
        double bv = x.value()[ch * hw];
        for (int64_t p = 1; p < hw; ++p) {
            const double v = x.value()[ch * hw + p];
            if (v > bv) {
                bv = v;
                best = p;
            }
        }
        out[ch] = bv;
        (*argmax)[size_t(ch)] = best;
    }
    auto xn = x.node();
    return Var(make_node("gmp", std::move(out), {xn}, [xn, argmax, c, hw](Node& self) {
        if (!wants(xn)) return;
        ensure_grad(*xn);
        for (int64_t ch = 0; ch < c; ++ch)
            xn->grad[ch * hw + (*argmax)[size_t(ch)]] += self.grad[ch];
    }));
}

Var channel_mean(const Var& x) {
    const auto& s = x.value().shape();
    const int64_t c = s[0], hw = s[1] * s[2];
    Tensor out({1, s[1], s[2]});
    for (int64_t p = 0; p < hw; ++p) {
        double acc = 0;
        for (int64_t ch = 0; ch < c; ++ch) acc += x.value()[ch * hw + p];
        out[p] = acc / double(c);
    }
    auto xn = x.node();
    return Var(make_node("channel_mean", std::move(out), {xn}, [xn, c, hw](Node& self) {
        if (!wants(xn)) return;
        ensure_grad(*xn);
        for (int64_t p = 0; p < hw; ++p) {
            const double g = self.grad[p] / double(c);
            for (int64_t ch = 0; ch < c; ++ch) xn->grad[ch * hw + p] += g;
        }
    }));
}

Var channel_max(const Var& x) {
    const auto& s = x.value().shape();
    const int64_t c = s[0], hw = s[1] * s[2];
    Tensor out({1, s[1], s[2]});
    auto argmax = std::make_shared<std::vector<int64_t>>(size_t(hw));
    for (int64_t p = 0; p < hw; ++p) {
        int64_t best = 0;
        double bv = x.value()[p];
        for (int64_t ch = 1; ch < c; ++ch) {
            const double v = x.value()[ch * hw + p];
            if (v > bv) {
                bv = v;
                best = ch;
            }
        }
        out[p] = bv;
        (*argmax)[size_t(p)] = best;
    }
    auto xn = x.node();
    return Var(make_node("channel_max", std::move(out), {xn}, [xn, argmax, hw](Node& self) {
        if (!wants(xn)) return;
        ensure_grad(*xn);
        for (int64_t p = 0; p < hw; ++p) xn->grad[(*argmax)[size_t(p)] * hw + p] += self.grad[p];
    }));
}

Var avg_pool2x2(const Var& x) {
    const auto& s = x.value().shape();
    const int64_t c = s[0], h = s[1], w = s[2], ho = h / 2, wo = w / 2;
    if (ho == 0 || wo == 0) throw ShapeError("avg_pool2x2: input too small");
    Tensor out({c, ho, wo});
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < ho; ++y)
            for (int64_t xx = 0; xx < wo; ++xx) {
                const double* p = x.value().data() + (ch * h + 2 * y) * w + 2 * xx;
                out.at(ch, y, xx) = 0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
            }
    auto xn = x.node();
    return Var(make_node("avg_pool2x2", std::move(out), {xn}, [xn, c, h, w, ho, wo](Node& self) {
        if (!wants(xn)) return;
        ensure_grad(*xn);
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t y = 0; y < ho; ++y)
                for (int64_t xx = 0; xx < wo; ++xx) {
                    const double g = 0.25 * self.grad.at(ch, y, xx);
                    double* p = xn->grad.data() + (ch * h + 2 * y) * w + 2 * xx;
                    p[0] += g;
                    p[1] += g;
                    p[w] += g;
                    p[w + 1] += g;
                }
    }));
}

Var max_pool2d(const Var& x, int k, int stride, int pad) {
    const auto& s = x.value().shape();
    const int64_t c = s[0], h = s[1], w = s[2];
    const int64_t ho = (h + 2 * pad - k) / stride + 1;
    const int64_t wo = (w + 2 * pad - k) / stride + 1;
    if (ho <= 0 || wo <= 0) throw ShapeError("max_pool2d: window larger than padded input");
    Tensor out({c, ho, wo});
    auto argmax = std::make_shared<std::vector<int64_t>>(size_t(c * ho * wo), -1);
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t oy = 0; oy < ho; ++oy)
            for (int64_t ox = 0; ox < wo; ++ox) {
                double bv = -1e300;
                int64_t bi = -1;
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        const int64_t iy = oy * stride - pad + ky;
                        const int64_t ix = ox * stride - pad + kx;
                        if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                        const double v = x.value()[(ch * h + iy) * w + ix];
                        if (v > bv) {
                            bv = v;
                            bi = (ch * h + iy) * w + ix;
                        }
                    }
                out.at(ch, oy, ox) = bi >= 0 ? bv : 0.0;
                (*argmax)[size_t((ch * ho + oy) * wo + ox)] = bi;
            }
    auto xn = x.node();
    return Var(make_node("max_pool2d", std::move(out), {xn}, [xn, argmax](Node& self) {
        if (!wants(xn)) return;
        ensure_grad(*xn);
        for (int64_t i = 0; i < self.grad.numel(); ++i) {
            const int64_t src = (*argmax)[size_t(i)];
            if (src >= 0) xn->grad[src] += self.grad[i];
        }
    }));
}

Var mul_map(const Var& x, const Var& gate) {
    const auto& s = x.value().shape();
    const auto& sg = gate.value().shape();
    if (sg.size() != 3 || sg[0] != 1 || sg[1] != s[1] || sg[2] != s[2])
        throw ShapeError("mul_map: gate must be (1,H,W) matching input");
    const int64_t c = s[0], hw = s[1] * s[2];
    Tensor out(s);
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t p = 0; p < hw; ++p) out[ch * hw + p] = x.value()[ch * hw + p] * gate.value()[p];
    auto xn = x.node(), gn = gate.node();
    return Var(make_node("mul_map", std::move(out), {xn, gn}, [xn, gn, c, hw](Node& self) {
        if (wants(xn)) {
            ensure_grad(*xn);
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t p = 0; p < hw; ++p)
                    xn->grad[ch * hw + p] += self.grad[ch * hw + p] * gn->value[p];
        }
        if (wants(gn)) {
            ensure_grad(*gn);
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t p = 0; p < hw; ++p)
                    gn->grad[p] += self.grad[ch * hw + p] * xn->value[ch * hw + p];
        }
    }));
}

Var scale_channels(const Var& x, const Var& w) {
    const auto& s = x.value().shape();
    if (w.value().ndim() != 1 || w.value().shape(0) != s[0])
        throw ShapeError("scale_channels: weight must be (C)");
    const int64_t c = s[0], hw = s[1] * s[2];
    Tensor out(s);
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t p = 0; p < hw; ++p) out[ch * hw + p] = x.value()[ch * hw + p] * w.value()[ch];
    auto xn = x.node(), wn = w.node();
    return Var(make_node("scale_channels", std::move(out), {xn, wn}, [xn, wn, c, hw](Node& self) {
        if (wants(xn)) {
            ensure_grad(*xn);
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t p = 0; p < hw; ++p)
                    xn->grad[ch * hw + p] += self.grad[ch * hw + p] * wn->value[ch];
        }
        if (wants(wn)) {
            ensure_grad(*wn);
            for (int64_t ch = 0; ch < c; ++ch) {
                double acc = 0;
                for (int64_t p = 0; p < hw; ++p)
                    acc += self.grad[ch * hw + p] * xn->value[ch * hw + p];
                wn->grad[ch] += acc;
            }
        }
    }));
}

Var channel_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const auto& s = x.value().shape();
    const int64_t c = s[0], hw = s[1] * s[2];
    if (gamma.value().shape(0) != c || beta.value().shape(0) != c)
        throw ShapeError("channel_norm: affine params must be (C)");
    Tensor out(s);
    auto stats = std::make_shared<Tensor>(Tensor({c, 2})); // mean, inv std per channel
    for (int64_t ch = 0; ch < c; ++ch) {
        double m = 0;
        for (int64_t p = 0; p < hw; ++p) m += x.value()[ch * hw + p];
        m /= double(hw);
        double v = 0;
        for (int64_t p = 0; p < hw; ++p) {
            const double d = x.value()[ch * hw + p] - m;
            v += d * d;
        }
        v /= double(hw);
        const double inv = 1.0 / std::sqrt(v + eps);
        stats->at(ch, 0) = m;
        stats->at(ch, 1) = inv;
        const double g = gamma.value()[ch], b = beta.value()[ch];
        for (int64_t p = 0; p < hw; ++p)
            out[ch * hw + p] = (x.value()[ch * hw + p] - m) * inv * g + b;
    }
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    return Var(make_node("channel_norm", std::move(out), {xn, gn, bn},
                         [xn, gn, bn, stats, c, hw](Node& self) {
        for (int64_t ch = 0; ch < c; ++ch) {
            const double m = stats->at(ch, 0), inv = stats->at(ch, 1);
            const double g = gn->value[ch];
            double sum_dy = 0, sum_dy_xhat = 0;
            for (int64_t p = 0; p < hw; ++p) {
                const double dy = self.grad[ch * hw + p];
                const double xhat = (xn->value[ch * hw + p] - m) * inv;
                sum_dy += dy;
                sum_dy_xhat += dy * xhat;
            }
            if (wants(gn)) {
                ensure_grad(*gn);
                gn->grad[ch] += sum_dy_xhat;
            }
            if (wants(bn)) {
                ensure_grad(*bn);
                bn->grad[ch] += sum_dy;
            }
            if (wants(xn)) {
                ensure_grad(*xn);
                const double inv_n = 1.0 / double(hw);
                for (int64_t p = 0; p < hw; ++p) {
                    const double dy = self.grad[ch * hw + p];
                    const double xhat = (xn->value[ch * hw + p] - m) * inv;
                    xn->grad[ch * hw + p] +=
                        g * inv * (dy - inv_n * sum_dy - xhat * inv_n * sum_dy_xhat);
                }
            }
        }
    }));
}

Var upsample_bilinear(const Var& x, int64_t out_h, int64_t out_w) {
    const auto& s = x.value().shape();
    const int64_t c = s[0], h = s[1], w = s[2];
    Tensor out({c, out_h, out_w});
    const double sy = double(h) / double(out_h);
    const double sx = double(w) / double(out_w);

    struct Tap {
        int64_t lo, hi;
        double wlo, whi;
    };
    auto make_taps = [](int64_t n_out, int64_t n_in, double scale) {
        std::vector<Tap> taps(static_cast<size_t>(n_out));
        for (int64_t i = 0; i < n_out; ++i) {
            double src = (double(i) + 0.5) * scale - 0.5;
            if (src < 0) src = 0;
            if (src > double(n_in - 1)) src = double(n_in - 1);
            const int64_t lo = int64_t(std::floor(src));
            const int64_t hi = std::min(lo + 1, n_in - 1);
            const double f = src - double(lo);
            taps[size_t(i)] = {lo, hi, 1.0 - f, f};
        }
        return taps;
    };
    auto ty = std::make_shared<std::vector<Tap>>(make_taps(out_h, h, sy));
    auto tx = std::make_shared<std::vector<Tap>>(make_taps(out_w, w, sx));

    for (int64_t ch = 0; ch < c; ++ch) {
        const double* xc = x.value().data() + ch * h * w;
        double* oc = out.data() + ch * out_h * out_w;
        for (int64_t oy = 0; oy < out_h; ++oy) {
            const Tap& yy = (*ty)[size_t(oy)];
            for (int64_t ox = 0; ox < out_w; ++ox) {
                const Tap& xxp = (*tx)[size_t(ox)];
                oc[oy * out_w + ox] = yy.wlo * (xxp.wlo * xc[yy.lo * w + xxp.lo] +
                                                xxp.whi * xc[yy.lo * w + xxp.hi]) +
                                      yy.whi * (xxp.wlo * xc[yy.hi * w + xxp.lo] +
                                                xxp.whi * xc[yy.hi * w + xxp.hi]);
            }
        }
    }
    auto xn = x.node();
    return Var(make_node("upsample_bilinear", std::move(out), {xn},
                         [xn, ty, tx, c, h, w, out_h, out_w](Node& self) {
        if (!wants(xn)) return;
        ensure_grad(*xn);
        for (int64_t ch = 0; ch < c; ++ch) {
            double* gc = xn->grad.data() + ch * h * w;
            const double* go = self.grad.data() + ch * out_h * out_w;
            for (int64_t oy = 0; oy < out_h; ++oy) {
                const Tap& yy = (*ty)[size_t(oy)];
                for (int64_t ox = 0; ox < out_w; ++ox) {
                    const Tap& xxp = (*tx)[size_t(ox)];
                    const double g = go[oy * out_w + ox];
                    gc[yy.lo * w + xxp.lo] += g * yy.wlo * xxp.wlo;
                    gc[yy.lo * w + xxp.hi] += g * yy.wlo * xxp.whi;
                    gc[yy.hi * w + xxp.lo] += g * yy.whi * xxp.wlo;
                    gc[yy.hi * w + xxp.hi] += g * yy.whi * xxp.whi;
                }
            }
        }
    }));
}

Var pad_reflect(const Var& x, int p) {
    const auto& s = x.value().shape();
    const int64_t c = s[0], h = s[1], w = s[2];
    if (p >= h || p >= w) throw ShapeError("pad_reflect: pad too large for input");
    const int64_t ho = h + 2 * p, wo = w + 2 * p;
    auto refl = [](int64_t i, int64_t n) {
        if (i < 0) return -i;
        if (i >= n) return 2 * n - 2 - i;
        return i;
    };
    Tensor out({c, ho, wo});
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < ho; ++y) {
            const int64_t iy = refl(y - p, h);
            for (int64_t xx = 0; xx < wo; ++xx)
                out.at(ch, y, xx) = x.value().at(ch, iy, refl(xx - p, w));
        }
    auto xn = x.node();
    return Var(make_node("pad_reflect", std::move(out), {xn}, [xn, c, h, w, p, refl](Node& self) {
        if (!wants(xn)) return;
        ensure_grad(*xn);
        const int64_t ho = h + 2 * p, wo = w + 2 * p;
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t y = 0; y < ho; ++y) {
                const int64_t iy = refl(y - p, h);
                for (int64_t xx = 0; xx < wo; ++xx)
                    xn->grad.at(ch, iy, refl(xx - p, w)) += self.grad.at(ch, y, xx);
            }
    }));
}

// ---- backward sweep ----------------------------------------------------------

void backward(const Var& root) {
    if (root.value().numel() != 1)
        throw ShapeError("backward: root must be a scalar, got " + root.value().shape_str());

    // iterative topological order over the tape
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->inputs.size()) {
            Node* child = n->inputs[idx++].get();
            if (child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    ensure_grad(*root.node());
    root.node()->grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->requires_grad && n->grad.defined()) n->backward_fn(*n);
    }
}

} // namespace irfs::ag
