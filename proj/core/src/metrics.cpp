#include "irfs/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace irfs::metrics {

namespace {

Tensor as_plane(const Tensor& t, const char* what) {
    if (t.ndim() == 2) return t;
    if (t.ndim() == 3 && t.shape(0) == 1) return t.reshaped({t.shape(1), t.shape(2)});
    if (t.ndim() == 3 && t.shape(2) == 1) return t.reshaped({t.shape(0), t.shape(1)});
    throw ShapeError(std::string(what) + ": expected a single-channel plane, got " + t.shape_str());
}

// min-max normalize then quantize to 8-bit bins
std::vector<int> quantize256(const Tensor& p) {
    const double lo = p.min(), hi = p.max();
    std::vector<int> q(size_t(p.numel()));
    if (hi - lo <= 0) return q; // constant image -> all bin 0
    const double s = 255.0 / (hi - lo);
    for (int64_t i = 0; i < p.numel(); ++i) q[size_t(i)] = int(std::lround((p[i] - lo) * s));
    return q;
}

} // namespace

void HistogramPair::validate() const {
    for (int i = 0; i < 256; ++i) {
        double row = 0, col = 0;
        for (int j = 0; j < 256; ++j) {
            row += joint.at(i, j);
            col += joint.at(j, i);
        }
        if (std::fabs(row - marg_a[size_t(i)]) > 1e-9 || std::fabs(col - marg_b[size_t(i)]) > 1e-9)
            throw RangeError("histogram pair: marginals do not match joint sums");
    }
}

HistogramPair joint_histogram(const Tensor& a, const Tensor& b) {
    const Tensor pa = as_plane(a, "joint_histogram");
    const Tensor pb = as_plane(b, "joint_histogram");
    check_same_shape(pa, pb, "joint_histogram");
    const auto qa = quantize256(pa);
    const auto qb = quantize256(pb);
    HistogramPair h{Tensor({256, 256}), {}, {}};
    const double inv = 1.0 / double(pa.numel());
    for (size_t i = 0; i < qa.size(); ++i) {
        h.joint.at(qa[i], qb[i]) += inv;
        h.marg_a[size_t(qa[i])] += inv;
        h.marg_b[size_t(qb[i])] += inv;
    }
    return h;
}

double entropy_bits(const Tensor& img) {
    const auto q = quantize256(as_plane(img, "entropy"));
    std::array<double, 256> hist{};
    for (int v : q) hist[size_t(v)] += 1.0 / double(q.size());
    double e = 0;
    for (double p : hist)
        if (p > 0) e -= p * std::log2(p);
    return e;
}

double mi_pair(const Tensor& a, const Tensor& b) {
    const HistogramPair h = joint_histogram(a, b);
    double v = 0;
    for (int i = 0; i < 256; ++i)
        for (int j = 0; j < 256; ++j) {
            const double p = h.joint.at(i, j);
            if (p > 0) v += p * std::log2(p / (h.marg_a[size_t(i)] * h.marg_b[size_t(j)]));
        }
    return v;
}

double mi(const Tensor& ir, const Tensor& vis, const Tensor& fused) {
    return mi_pair(ir, fused) + mi_pair(vis, fused);
}

namespace {

struct PearsonResult {
    double r = 0;
    bool degenerate = false;
};

PearsonResult pearson(const Tensor& a, const Tensor& b) {
    const double ma = a.mean(), mb = b.mean();
    double sab = 0, saa = 0, sbb = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0 || sbb <= 0) return {0.0, true};
    return {sab / (std::sqrt(saa) * std::sqrt(sbb)), false};
}

} // namespace

CcResult cc_checked(const Tensor& ir, const Tensor& vis, const Tensor& fused) {
    const Tensor pi = as_plane(ir, "cc"), pv = as_plane(vis, "cc"), pf = as_plane(fused, "cc");
    check_same_shape(pi, pf, "cc");
    check_same_shape(pv, pf, "cc");
    const PearsonResult a = pearson(pi, pf);
    const PearsonResult b = pearson(pv, pf);
    return {(a.r + b.r) / 2.0, a.degenerate || b.degenerate};
}

double cc(const Tensor& ir, const Tensor& vis, const Tensor& fused) {
    return cc_checked(ir, vis, fused).value;
}

// ---- VIF (pixel domain) ------------------------------------------------------

namespace {

std::vector<double> gaussian_kernel(int n, double sd) {
    std::vector<double> k(static_cast<size_t>(n));
    const double c = (n - 1) / 2.0;
    double sum = 0;
    for (int i = 0; i < n; ++i) {
        k[size_t(i)] = std::exp(-(i - c) * (i - c) / (2 * sd * sd));
        sum += k[size_t(i)];
    }
    for (double& v : k) v /= sum;
    return k;
}

// separable 'valid' Gaussian filtering
Tensor filter_valid(const Tensor& img, const std::vector<double>& k) {
    const int n = int(k.size());
    const int64_t h = img.shape(0), w = img.shape(1);
    const int64_t wo = w - n + 1, ho = h - n + 1;
    if (wo < 1 || ho < 1) throw ShapeError("vif: window larger than image");
    Tensor tmp({h, wo});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < wo; ++x) {
            double acc = 0;
            for (int i = 0; i < n; ++i) acc += k[size_t(i)] * img.at(y, x + i);
            tmp.at(y, x) = acc;
        }
    Tensor out({ho, wo});
    for (int64_t y = 0; y < ho; ++y)
        for (int64_t x = 0; x < wo; ++x) {
            double acc = 0;
            for (int i = 0; i < n; ++i) acc += k[size_t(i)] * tmp.at(y + i, x);
            out.at(y, x) = acc;
        }
    return out;
}

Tensor decimate2(const Tensor& img) {
    const int64_t ho = (img.shape(0) + 1) / 2, wo = (img.shape(1) + 1) / 2;
    Tensor out({ho, wo});
    for (int64_t y = 0; y < ho; ++y)
        for (int64_t x = 0; x < wo; ++x) out.at(y, x) = img.at(2 * y, 2 * x);
    return out;
}

int vif_window(int nominal, int64_t h, int64_t w) {
    int win = nominal;
    const int64_t m = std::min(h, w);
    if (m < win) win = int(m % 2 == 1 ? m : m - 1);
    return win;
}

} // namespace

double vif_pair(const Tensor& ref_in, const Tensor& dist_in) {
    Tensor ref = as_plane(ref_in, "vif");
    Tensor dist = as_plane(dist_in, "vif");
    check_same_shape(ref, dist, "vif");
    if (std::min(ref.shape(0), ref.shape(1)) < 8)
        throw ShapeError("vif: min dimension must be >= 8");
    // convention: 8-bit dynamic range with additive neural noise variance 2
    ref *= 255.0;
    dist *= 255.0;
    constexpr double kSigmaNsq = 2.0;
    constexpr double kEps = 1e-10;

    double num = 0, den = 0;
    for (int scale = 1; scale <= 4; ++scale) {
        const int nominal = (1 << (4 - scale + 1)) + 1; // 17, 9, 5, 3
        if (scale > 1) {
            int w = vif_window(nominal, ref.shape(0), ref.shape(1));
            if (w < 1) break;
            const auto k = gaussian_kernel(w, double(w) / 5.0);
            ref = decimate2(filter_valid(ref, k));
            dist = decimate2(filter_valid(dist, k));
        }
        const int w = vif_window(nominal, ref.shape(0), ref.shape(1));
        if (w < 1) break;
        const auto k = gaussian_kernel(w, double(w) / 5.0);
        const Tensor mu1 = filter_valid(ref, k), mu2 = filter_valid(dist, k);
        const Tensor rr = filter_valid(hadamard(ref, ref), k);
        const Tensor dd = filter_valid(hadamard(dist, dist), k);
        const Tensor rd = filter_valid(hadamard(ref, dist), k);
        for (int64_t i = 0; i < mu1.numel(); ++i) {
            double s1 = std::max(0.0, rr[i] - mu1[i] * mu1[i]);
            double s2 = std::max(0.0, dd[i] - mu2[i] * mu2[i]);
            const double s12 = rd[i] - mu1[i] * mu2[i];
            double g = s12 / (s1 + kEps);
            double sv = s2 - g * s12;
            if (s1 < kEps) {
                g = 0;
                sv = s2;
                s1 = 0;
            }
            if (s2 < kEps) {
                g = 0;
                sv = 0;
            }
            if (g < 0) {
                sv = s2;
                g = 0;
            }
            sv = std::max(sv, kEps);
            num += std::log10(1.0 + g * g * s1 / (sv + kSigmaNsq));
            den += std::log10(1.0 + s1 / kSigmaNsq);
        }
    }
    if (den <= 0) return 0.0;
    return num / den;
}

double vif(const Tensor& ir, const Tensor& vis, const Tensor& fused) {
    return vif_pair(ir, fused) + vif_pair(vis, fused);
}

// ---- SOD metrics ---------------------------------------------------------------

namespace {

void check_pred_gt(const Tensor& pred, const Tensor& gt, const char* what) {
    check_same_shape(pred, gt, what);
    for (int64_t i = 0; i < pred.numel(); ++i)
        if (!(pred[i] >= 0.0 && pred[i] <= 1.0))
            throw RangeError(std::string(what) + ": prediction outside [0,1]");
    for (int64_t i = 0; i < gt.numel(); ++i)
        if (gt[i] != 0.0 && gt[i] != 1.0)
            throw RangeError(std::string(what) + ": mask is not binary");
}

// adaptive binarization: threshold 2*mean clamped to 1; an all-zero map
// stays empty
std::vector<char> adaptive_binarize(const Tensor& pred) {
    const double t = std::max(std::min(2.0 * pred.mean(), 1.0), 1e-12);
    std::vector<char> out(size_t(pred.numel()));
    for (int64_t i = 0; i < pred.numel(); ++i) out[size_t(i)] = pred[i] >= t ? 1 : 0;
    return out;
}

} // namespace

double mae(const Tensor& pred_in, const Tensor& gt_in) {
    const Tensor pred = as_plane(pred_in, "mae"), gt = as_plane(gt_in, "mae");
    check_pred_gt(pred, gt, "mae");
    double acc = 0;
    for (int64_t i = 0; i < pred.numel(); ++i) acc += std::fabs(pred[i] - gt[i]);
    return acc / double(pred.numel());
}

FBetaResult f_beta_checked(const Tensor& pred_in, const Tensor& gt_in) {
    const Tensor pred = as_plane(pred_in, "f_beta"), gt = as_plane(gt_in, "f_beta");
    check_pred_gt(pred, gt, "f_beta");
    const auto bin = adaptive_binarize(pred);
    int64_t tp = 0, fp = 0, fn = 0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        const bool p = bin[size_t(i)] != 0, g = gt[i] != 0.0;
        tp += p && g;
        fp += p && !g;
        fn += !p && g;
    }
    if (tp + fp == 0) return {0.0, true};
    if (tp == 0) return {0.0, false};
    const double precision = double(tp) / double(tp + fp);
    const double recall = double(tp) / double(tp + fn);
    constexpr double kBetaSq = 0.3;
    return {(1.0 + kBetaSq) * precision * recall / (kBetaSq * precision + recall), false};
}

double f_beta(const Tensor& pred, const Tensor& gt) { return f_beta_checked(pred, gt).value; }

namespace {

double object_score(const std::vector<double>& vals) {
    if (vals.empty()) return 0.0;
    double mean = 0;
    for (double v : vals) mean += v;
    mean /= double(vals.size());
    double var = 0;
    for (double v : vals) var += (v - mean) * (v - mean);
    const double sd = vals.size() > 1 ? std::sqrt(var / double(vals.size() - 1)) : 0.0;
    return 2.0 * mean / (mean * mean + 1.0 + sd + 1e-12);
}

double s_object(const Tensor& pred, const Tensor& gt) {
    std::vector<double> fg, bg;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        if (gt[i] != 0.0)
            fg.push_back(pred[i]);
        else
            bg.push_back(1.0 - pred[i]);
    }
    const double mu = gt.mean();
    return mu * object_score(fg) + (1.0 - mu) * object_score(bg);
}

double region_q(const Tensor& pred, const Tensor& gt, int64_t y0, int64_t y1, int64_t x0,
                int64_t x1) {
    const int64_t n = (y1 - y0) * (x1 - x0);
    if (n == 0) return 0.0;
    double mx = 0, my = 0;
    for (int64_t y = y0; y < y1; ++y)
        for (int64_t x = x0; x < x1; ++x) {
            mx += pred.at(y, x);
            my += gt.at(y, x);
        }
    mx /= double(n);
    my /= double(n);
    double sxx = 0, syy = 0, sxy = 0;
    for (int64_t y = y0; y < y1; ++y)
        for (int64_t x = x0; x < x1; ++x) {
            const double dx = pred.at(y, x) - mx, dy = gt.at(y, x) - my;
            sxx += dx * dx;
            syy += dy * dy;
            sxy += dx * dy;
        }
    const double denom_n = n > 1 ? double(n - 1) : 1.0;
    sxx /= denom_n;
    syy /= denom_n;
    sxy /= denom_n;
    const double alpha = 4.0 * mx * my * sxy;
    const double beta = (mx * mx + my * my) * (sxx + syy);
    if (alpha != 0.0) return alpha / (beta + 1e-12);
    return beta == 0.0 ? 1.0 : 0.0;
}

double s_region(const Tensor& pred, const Tensor& gt) {
    const int64_t h = gt.shape(0), w = gt.shape(1);
    // mask centroid, clamped so all four quadrants are non-empty
    double total = 0, cx = 0, cy = 0;
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            if (gt.at(y, x) != 0.0) {
                total += 1;
                cx += double(x);
                cy += double(y);
            }
    int64_t sx = w / 2, sy = h / 2;
    if (total > 0) {
        sx = std::clamp<int64_t>(int64_t(std::llround(cx / total)), 1, w - 1);
        sy = std::clamp<int64_t>(int64_t(std::llround(cy / total)), 1, h - 1);
    }
    const double n_all = double(h * w);
    double score = 0;
    const int64_t ys[3] = {0, sy, h}, xs[3] = {0, sx, w};
    for (int qy = 0; qy < 2; ++qy)
        for (int qx = 0; qx < 2; ++qx) {
            const int64_t y0 = ys[qy], y1 = ys[qy + 1], x0 = xs[qx], x1 = xs[qx + 1];
            const double weight = double((y1 - y0) * (x1 - x0)) / n_all;
            score += weight * region_q(pred, gt, y0, y1, x0, x1);
        }
    return score;
}

} // namespace

double s_measure(const Tensor& pred_in, const Tensor& gt_in) {
    const Tensor pred = as_plane(pred_in, "s_measure"), gt = as_plane(gt_in, "s_measure");
    check_pred_gt(pred, gt, "s_measure");
    const double y = gt.mean();
    if (y == 0.0) return 1.0 - pred.mean(); // no object: reward empty maps
    if (y == 1.0) return pred.mean();
    constexpr double kAlpha = 0.5;
    const double s = kAlpha * s_object(pred, gt) + (1.0 - kAlpha) * s_region(pred, gt);
    return std::clamp(s, 0.0, 1.0);
}

double e_measure(const Tensor& pred_in, const Tensor& gt_in) {
    const Tensor pred = as_plane(pred_in, "e_measure"), gt = as_plane(gt_in, "e_measure");
    check_pred_gt(pred, gt, "e_measure");
    const auto bin = adaptive_binarize(pred);
    const int64_t n = pred.numel();
    double gt_sum = 0, fm_sum = 0;
    for (int64_t i = 0; i < n; ++i) {
        gt_sum += gt[i];
        fm_sum += bin[size_t(i)];
    }
    double acc = 0;
    if (gt_sum == 0) { // empty mask: reward empty predictions
        for (int64_t i = 0; i < n; ++i) acc += 1.0 - bin[size_t(i)];
    } else if (gt_sum == double(n)) {
        for (int64_t i = 0; i < n; ++i) acc += bin[size_t(i)];
    } else {
        const double mg = gt_sum / double(n), mf = fm_sum / double(n);
        for (int64_t i = 0; i < n; ++i) {
            const double dg = gt[i] - mg, df = double(bin[size_t(i)]) - mf;
            const double align = 2.0 * dg * df / (dg * dg + df * df + 1e-12);
            acc += (align + 1.0) * (align + 1.0) / 4.0;
        }
    }
    return acc / double(n);
}

// ---- report serialization -------------------------------------------------------

std::string report_to_json(const EvaluationReport& report, bool fusion_block, bool sod_block) {
    using nlohmann::json;
    auto block = [&](const MetricReport& r) {
        json j;
        if (fusion_block)
            j["fusion"] = {{"mi", r.fusion.mi}, {"vif", r.fusion.vif}, {"cc", r.fusion.cc}};
        if (sod_block)
            j["sod"] = {{"s_alpha", r.sod.s_alpha},
                        {"f_beta", r.sod.f_beta},
                        {"e_xi", r.sod.e_xi},
                        {"mae", r.sod.mae}};
        return j;
    };
    json j;
    j["dataset"] = report.aggregate.dataset;
    j["n_samples"] = report.aggregate.n_samples;
    j["aggregate"] = block(report.aggregate);
    json per = json::object();
    for (const auto& [id, r] : report.per_sample) per[id] = block(r);
    j["per_sample"] = per;
    j["metric_config"] = {{"mi_bins", report.config.mi_bins},
                          {"mi_log_base", report.config.mi_log_base},
                          {"f_beta_sq", report.config.f_beta_sq},
                          {"s_alpha", report.config.s_alpha},
                          {"vif_scales", report.config.vif_scales},
                          {"vif_sigma_nsq", report.config.vif_sigma_nsq},
                          {"vif_source_mode", report.config.vif_source_mode}};
    j["flags"] = report.flags;
    return j.dump(2);
}

} // namespace irfs::metrics
