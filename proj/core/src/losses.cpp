#include "irfs/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace irfs::losses {

using ag::Var;

namespace {

// Accepts (H,W), (1,H,W) or (H,W,1); returns a (H,W) copy.
Tensor as_plane(const Tensor& t, const char* what) {
    if (t.ndim() == 2) return t;
    if (t.ndim() == 3 && t.shape(0) == 1) return t.reshaped({t.shape(1), t.shape(2)});
    if (t.ndim() == 3 && t.shape(2) == 1) return t.reshaped({t.shape(0), t.shape(1)});
    throw ShapeError(std::string(what) + ": expected a single-channel plane, got " + t.shape_str());
}

Tensor as_chw(const Tensor& plane) { return plane.reshaped({1, plane.shape(0), plane.shape(1)}); }

void check_unit_range(const Tensor& t, const char* what) {
    for (int64_t i = 0; i < t.numel(); ++i)
        if (!(t[i] >= 0.0 && t[i] <= 1.0))
            throw RangeError(std::string(what) + ": value outside [0,1]");
}

// 15x15-style box mean with zero padding, full-window normalization
Tensor box_mean(const Tensor& plane, int window) {
    const int64_t h = plane.shape(0), w = plane.shape(1);
    const int r = window / 2;
    // summed-area table with one row/col of zeros
    std::vector<double> sat(size_t((h + 1) * (w + 1)), 0.0);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            sat[size_t((y + 1) * (w + 1) + (x + 1))] = plane.at(y, x) +
                                                       sat[size_t(y * (w + 1) + (x + 1))] +
                                                       sat[size_t((y + 1) * (w + 1) + x)] -
                                                       sat[size_t(y * (w + 1) + x)];
    Tensor out({h, w});
    const double inv = 1.0 / double(window * window);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            const int64_t y0 = std::max<int64_t>(0, y - r), y1 = std::min<int64_t>(h, y + r + 1);
            const int64_t x0 = std::max<int64_t>(0, x - r), x1 = std::min<int64_t>(w, x + r + 1);
            const double s = sat[size_t(y1 * (w + 1) + x1)] - sat[size_t(y0 * (w + 1) + x1)] -
                             sat[size_t(y1 * (w + 1) + x0)] + sat[size_t(y0 * (w + 1) + x0)];
            out.at(y, x) = s * inv;
        }
    return out;
}

Var gaussian_window_var(int k, double sigma) {
    Tensor w({1, 1, k, k});
    const double c = (k - 1) / 2.0;
    double sum = 0;
    for (int y = 0; y < k; ++y)
        for (int x = 0; x < k; ++x) {
            const double v = std::exp(-((y - c) * (y - c) + (x - c) * (x - c)) / (2 * sigma * sigma));
            w[int64_t(y) * k + x] = v;
            sum += v;
        }
    for (int64_t i = 0; i < w.numel(); ++i) w[i] /= sum;
    return Var::constant(w);
}

constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

int ssim_window_for(int64_t h, int64_t w) {
    int win = 11;
    const int64_t m = std::min(h, w);
    if (m < win) win = int(m % 2 == 1 ? m : m - 1);
    if (win < 3) throw ShapeError("ssim: image too small for any window");
    return win;
}

struct SsimTerms {
    Var luminance, contrast_structure; // mean over the valid region
};

SsimTerms ssim_terms(const Var& a, const Var& b) {
    const auto& s = a.value().shape();
    const int win = ssim_window_for(s[1], s[2]);
    const Var g = gaussian_window_var(win, 1.5);
    auto blur = [&](const Var& x) { return ag::conv2d(x, g, Var(), 1, 0); };

    const Var mu1 = blur(a), mu2 = blur(b);
    const Var mu1_sq = ag::mul(mu1, mu1), mu2_sq = ag::mul(mu2, mu2);
    const Var mu12 = ag::mul(mu1, mu2);
    const Var sigma1 = ag::sub(blur(ag::mul(a, a)), mu1_sq);
    const Var sigma2 = ag::sub(blur(ag::mul(b, b)), mu2_sq);
    const Var sigma12 = ag::sub(blur(ag::mul(a, b)), mu12);

    const Var l = ag::div(ag::add_scalar(ag::mul_scalar(mu12, 2.0), kSsimC1),
                          ag::add_scalar(ag::add(mu1_sq, mu2_sq), kSsimC1));
    const Var cs = ag::div(ag::add_scalar(ag::mul_scalar(sigma12, 2.0), kSsimC2),
                           ag::add_scalar(ag::add(sigma1, sigma2), kSsimC2));
    return {ag::mean(l), ag::mean(cs)};
}

} // namespace

FusionLossTerms FusionLossVars::terms(double lambda, double gamma) const {
    return {intensity.scalar(), gradient.scalar(), total.scalar(), lambda, gamma};
}

SodLossTerms SodLossVars::terms() const { return {coarse.scalar(), precise.scalar(), total.scalar()}; }

Tensor saliency_contrast(const Tensor& img) {
    const Tensor p = as_plane(img, "saliency_contrast");
    check_unit_range(p, "saliency_contrast");
    std::array<double, 256> hist{};
    for (int64_t i = 0; i < p.numel(); ++i)
        hist[size_t(std::lround(p[i] * 255.0))] += 1.0;
    const double inv_n = 1.0 / double(p.numel());
    for (double& h : hist) h *= inv_n;

    Tensor out(p.shape());
    for (int64_t i = 0; i < p.numel(); ++i) {
        const double v = p[i];
        double acc = 0;
        for (int bin = 0; bin < 256; ++bin)
            if (hist[size_t(bin)] > 0) acc += hist[size_t(bin)] * std::fabs(v - double(bin) / 255.0);
        out[i] = acc;
    }
    return out;
}

Tensor saliency_matrix(const Tensor& img) {
    Tensor s = saliency_contrast(img);
    const double lo = s.min(), hi = s.max();
    if (hi - lo <= 0.0) return Tensor::zeros(s.shape()); // constant image: zero contrast
    const double inv = 1.0 / (hi - lo);
    for (int64_t i = 0; i < s.numel(); ++i) s[i] = (s[i] - lo) * inv;
    return s;
}

std::pair<Tensor, Tensor> weight_maps(const Tensor& ir, const Tensor& y_vis) {
    const Tensor pi = as_plane(ir, "weight_maps");
    const Tensor pv = as_plane(y_vis, "weight_maps");
    check_same_shape(pi, pv, "weight_maps");
    // ratios are taken on the raw contrast (the normalized map pins its
    // minimum to zero, which would skew the weights at that pixel)
    const Tensor s_ir = saliency_contrast(pi);
    const Tensor s_vis = saliency_contrast(pv);
    constexpr double kEps = 1e-8;
    Tensor w_ir(pi.shape()), w_vis(pi.shape());
    for (int64_t i = 0; i < pi.numel(); ++i) {
        w_ir[i] = s_ir[i] / (s_ir[i] + s_vis[i] + kEps);
        w_vis[i] = 1.0 - w_ir[i];
    }
    return {w_ir, w_vis};
}

Var ssim(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "ssim");
    const SsimTerms t = ssim_terms(a, b);
    return ag::mul(t.luminance, t.contrast_structure);
}

Var ms_ssim(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "ms_ssim");
    static const std::array<double, 5> kWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    const auto& s = a.value().shape();
    int64_t m = std::min(s[1], s[2]);
    int scales = 1;
    while (scales < 5 && (m >> scales) >= 11) ++scales;
    if (scales == 1) return ssim(a, b); // single-scale fallback for small images

    double wsum = 0;
    for (int i = 0; i < scales; ++i) wsum += kWeights[size_t(i)];

    Var acc;
    Var xa = a, xb = b;
    for (int i = 0; i < scales; ++i) {
        const SsimTerms t = ssim_terms(xa, xb);
        const double w = kWeights[size_t(i)] / wsum;
        const Var factor = (i == scales - 1) ? ag::mul(t.luminance, t.contrast_structure)
                                             : t.contrast_structure;
        const Var clamped = ag::clamp(factor, 1e-6, 1e9); // guard fractional powers
        const Var term = ag::pow_scalar(clamped, w);
        acc = acc.defined() ? ag::mul(acc, term) : term;
        if (i + 1 < scales) {
            xa = ag::avg_pool2x2(xa);
            xb = ag::avg_pool2x2(xb);
        }
    }
    return acc;
}

Var intensity_loss(const Tensor& ir, const Tensor& y_vis, const Var& fused, double gamma) {
    if (gamma <= 0) throw RangeError("intensity_loss: gamma must be positive");
    const Tensor pi = as_plane(ir, "intensity_loss");
    const Tensor pv = as_plane(y_vis, "intensity_loss");
    check_same_shape(pi, pv, "intensity_loss");
    const auto [w_ir, w_vis] = weight_maps(pi, pv);

    Tensor target(pi.shape());
    for (int64_t i = 0; i < target.numel(); ++i)
        target[i] = w_ir[i] * pi[i] + w_vis[i] * pv[i];
    const Var target_v = Var::constant(as_chw(target));
    check_same_shape(target_v.value(), fused.value(), "intensity_loss");

    const Var l1 = ag::mean(ag::abs_op(ag::sub(fused, target_v)));
    const Var sim = ms_ssim(target_v, fused);
    return ag::add(l1, ag::mul_scalar(ag::add_scalar(ag::neg(sim), 1.0), gamma));
}

Tensor laplacian(const Tensor& plane) {
    const Tensor p = as_plane(plane, "laplacian");
    const int64_t h = p.shape(0), w = p.shape(1);
    auto refl = [](int64_t i, int64_t n) { return i < 0 ? -i : (i >= n ? 2 * n - 2 - i : i); };
    Tensor out({h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            out.at(y, x) = p.at(refl(y - 1, h), x) + p.at(refl(y + 1, h), x) +
                           p.at(y, refl(x - 1, w)) + p.at(y, refl(x + 1, w)) - 4.0 * p.at(y, x);
    return out;
}

Var gradient_loss(const Tensor& ir, const Tensor& y_vis, const Var& fused) {
    const Tensor pi = as_plane(ir, "gradient_loss");
    const Tensor pv = as_plane(y_vis, "gradient_loss");
    check_same_shape(pi, pv, "gradient_loss");

    const Tensor li = laplacian(pi);
    const Tensor lv = laplacian(pv);
    Tensor target(li.shape());
    for (int64_t i = 0; i < target.numel(); ++i)
        target[i] = std::fabs(li[i]) >= std::fabs(lv[i]) ? li[i] : lv[i];

    Tensor kernel({1, 1, 3, 3}, {0, 1, 0, 1, -4, 1, 0, 1, 0});
    const Var lap_fused = ag::conv2d(ag::pad_reflect(fused, 1), Var::constant(kernel), Var(), 1, 0);
    return ag::mean(ag::abs_op(ag::sub(lap_fused, Var::constant(as_chw(target)))));
}

FusionLossVars fusion_loss(const Tensor& ir, const Tensor& y_vis, const Var& fused, double lambda,
                           double gamma) {
    FusionLossVars out;
    out.intensity = intensity_loss(ir, y_vis, fused, gamma);
    out.gradient = gradient_loss(ir, y_vis, fused);
    out.total = ag::add(out.intensity, ag::mul_scalar(out.gradient, lambda));
    return out;
}

Var wbce_wiou(const Var& pred, const Tensor& gt, int pool_window) {
    const Tensor g = as_plane(gt, "wbce_wiou");
    const auto& sp = pred.value().shape();
    if (sp.size() != 3 || sp[0] != 1 || sp[1] != g.shape(0) || sp[2] != g.shape(1))
        throw ShapeError("wbce_wiou: prediction " + pred.value().shape_str() +
                         " does not match mask (" + std::to_string(g.shape(0)) + "," +
                         std::to_string(g.shape(1)) + ")");
    if (pool_window < 1 || pool_window % 2 == 0)
        throw RangeError("wbce_wiou: pool window must be odd and positive");

    // hard-region emphasis: boundaries get up to 6x weight
    const Tensor pooled = box_mean(g, pool_window);
    Tensor weights(g.shape());
    for (int64_t i = 0; i < g.numel(); ++i) weights[i] = 1.0 + 5.0 * std::fabs(pooled[i] - g[i]);
    const Var w = Var::constant(as_chw(weights));
    const Var gv = Var::constant(as_chw(g));
    const Var gv_inv = Var::constant(as_chw(Tensor(g.shape(), 1.0) - g));

    const Var p = ag::clamp(pred, 1e-7, 1.0 - 1e-7);
    const Var bce = ag::neg(ag::add(ag::mul(gv, ag::log_op(p)),
                                    ag::mul(gv_inv, ag::log_op(ag::sub(Var::constant(Tensor(p.value().shape(), 1.0)), p)))));
    const Var wsum = ag::sum(w);
    const Var wbce = ag::div(ag::sum(ag::mul(w, bce)), wsum);

    const Var inter = ag::sum(ag::mul(w, ag::mul(p, gv)));
    const Var uni = ag::sum(ag::mul(w, ag::add(p, gv)));
    const Var wiou = ag::add_scalar(
        ag::neg(ag::div(ag::add_scalar(inter, 1.0), ag::add_scalar(ag::sub(uni, inter), 1.0))), 1.0);
    return ag::add(wbce, wiou);
}

SodLossVars sod_loss(const SaliencyVars& outputs, const Tensor& gt, int pool_window,
                     bool average_maps) {
    SodLossVars out;
    const Var c = ag::add(ag::add(wbce_wiou(outputs.coarse_vis, gt, pool_window),
                                  wbce_wiou(outputs.coarse_ir, gt, pool_window)),
                          wbce_wiou(outputs.coarse_fused, gt, pool_window));
    const Var p = ag::add(wbce_wiou(outputs.precise_vis, gt, pool_window),
                          wbce_wiou(outputs.precise_ir, gt, pool_window));
    out.coarse = average_maps ? ag::mul_scalar(c, 1.0 / 3.0) : c;
    out.precise = average_maps ? ag::mul_scalar(p, 0.5) : p;
    out.total = ag::add(out.coarse, out.precise);
    return out;
}

Var overall_loss(const Var& fusion_total, const Var& sod_total, double tau, double eta) {
    if (tau <= 0 || eta <= 0) throw RangeError("overall_loss: tau and eta must be positive");
    return ag::add(ag::mul_scalar(fusion_total, tau), ag::mul_scalar(sod_total, eta));
}

std::vector<double> tau_sweep_grid() { return {0.1, 0.5, 1.0, 2.0, 5.0, 10.0}; }

} // namespace irfs::losses
