#include "irfs/sod_net.hpp"

#include <algorithm>
#include <cmath>

#include "irfs/color.hpp"

namespace irfs {

using ag::Var;

std::string to_string(Backbone b) { return b == Backbone::toy ? "toy" : "resnet34"; }

std::string to_string(Guidance g) {
    switch (g) {
    case Guidance::fused: return "fused";
    case Guidance::average: return "average";
    case Guidance::ir: return "ir";
    case Guidance::vis: return "vis";
    }
    return "?";
}

std::string to_string(FinalAggregation a) {
    switch (a) {
    case FinalAggregation::mean: return "mean";
    case FinalAggregation::max: return "max";
    case FinalAggregation::learned: return "learned";
    }
    return "?";
}

void SodNetConfig::validate() const {
    if (stage_channels.size() != 5) throw ConfigError("sod net: stage_channels must have length 5");
    for (int64_t c : stage_channels)
        if (c < 1) throw ConfigError("sod net: stage channels must be positive");
    if (msgd_stages.empty()) throw ConfigError("sod net: msgd_stages must be non-empty");
    for (int s : msgd_stages)
        if (s < 1 || s > 5) throw ConfigError("sod net: msgd stage out of range");
    for (int s : fgse_stages)
        if (s < 1 || s > 5) throw ConfigError("sod net: fgse stage out of range");
    if (gcm_dilations.empty()) throw ConfigError("sod net: gcm_dilations must be non-empty");
    if (attn_heads < 1) throw ConfigError("sod net: attn_heads must be positive");
    for (size_t i = 0; i < stage_channels.size(); ++i)
        if (stage_channels[i] % attn_heads != 0)
            throw ConfigError("sod net: attn_heads must divide every stage width");
    if (token_cap < 1) throw ConfigError("sod net: token_cap must be positive");
    if (decoder_channels < 1 || lfs_reduction < 1) throw ConfigError("sod net: bad decoder config");
    if (backbone == Backbone::resnet34 && stage_channels != std::vector<int64_t>{64, 64, 128, 256, 512})
        throw ConfigError("sod net: resnet34 backbone fixes stage_channels to [64,64,128,256,512]");
}

namespace {
std::vector<int> sorted_unique(std::vector<int> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}
} // namespace

SodNet::SodNet(const SodNetConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    cfg_.msgd_stages = sorted_unique(cfg_.msgd_stages);
    cfg_.fgse_stages = sorted_unique(cfg_.fgse_stages);
    const auto& sc = cfg_.stage_channels;

    if (cfg_.backbone == Backbone::toy) {
        toy_.resize(5);
        int64_t cin = 3;
        for (int i = 0; i < 5; ++i) {
            toy_[size_t(i)].conv = nn::Conv2d::make(rng, cin, sc[size_t(i)], 3, 2, 1);
            toy_[size_t(i)].norm = nn::ChannelNorm::make(sc[size_t(i)]);
            cin = sc[size_t(i)];
        }
    } else {
        rn_stem_ = nn::Conv2d::make(rng, 3, 64, 7, 2, 3);
        rn_stem_norm_ = nn::ChannelNorm::make(64);
        const int n_blocks[4] = {3, 4, 6, 3};
        int64_t cin = 64;
        rn_layers_.resize(4);
        for (int l = 0; l < 4; ++l) {
            const int64_t cout = sc[size_t(l + 1)];
            for (int b = 0; b < n_blocks[l]; ++b) {
                BasicBlock blk;
                const int stride = (l > 0 && b == 0) ? 2 : 1;
                blk.c1 = nn::Conv2d::make(rng, b == 0 ? cin : cout, cout, 3, stride, 1);
                blk.n1 = nn::ChannelNorm::make(cout);
                blk.c2 = nn::Conv2d::make(rng, cout, cout, 3, 1, 1);
                blk.n2 = nn::ChannelNorm::make(cout);
                if (b == 0 && (stride != 1 || cin != cout)) {
                    blk.down = nn::Conv2d::make(rng, cin, cout, 1, stride, 0, 1, false);
                    blk.down_n = nn::ChannelNorm::make(cout);
                }
                rn_layers_[size_t(l)].push_back(std::move(blk));
            }
            cin = cout;
        }
    }

    for (int s : cfg_.fgse_stages) {
        const int64_t c = sc[size_t(s - 1)];
        FgseBlock f;
        f.sem_cr_vis = nn::Conv2d::make(rng, c, c, 3, 1, 1);
        f.sem_cr_ir = cfg_.tie_fgse_branches ? f.sem_cr_vis : nn::Conv2d::make(rng, c, c, 3, 1, 1);
        f.sem_cs = nn::Conv2d::make(rng, c, c, 3, 1, 1);
        f.q_vis = nn::Conv2d::make(rng, c, c, 1, 1, 0);
        f.k_vis = nn::Conv2d::make(rng, c, c, 1, 1, 0);
        f.v_vis = nn::Conv2d::make(rng, c, c, 1, 1, 0);
        if (cfg_.tie_fgse_branches) {
            f.q_ir = f.q_vis;
            f.k_ir = f.k_vis;
            f.v_ir = f.v_vis;
        } else {
            f.q_ir = nn::Conv2d::make(rng, c, c, 1, 1, 0);
            f.k_ir = nn::Conv2d::make(rng, c, c, 1, 1, 0);
            f.v_ir = nn::Conv2d::make(rng, c, c, 1, 1, 0);
        }
        const int64_t hidden = std::max<int64_t>(1, 2 * c / cfg_.lfs_reduction);
        f.lfs_fc1 = nn::Linear::make(rng, 2 * c, hidden);
        f.lfs_fc2 = nn::Linear::make(rng, hidden, 2 * c);
        f.lfs_merge = nn::Conv2d::make(rng, 2 * c, c, 1, 1, 0);
        fgse_.emplace(s, std::move(f));
    }

    auto make_branch = [&](bool with_precise) {
        DecoderBranch b;
        const int64_t dc = cfg_.decoder_channels;
        for (int s : cfg_.msgd_stages) {
            Gcm g;
            for (int d : cfg_.gcm_dilations)
                g.branches.push_back(nn::Conv2d::make(rng, sc[size_t(s - 1)], dc, 3, 1, d, d));
            g.norm = nn::ChannelNorm::make(dc);
            b.gcm.emplace(s, std::move(g));
            b.cbr.emplace(s, Cbr{nn::Conv2d::make(rng, dc, dc, 3, 1, 1), nn::ChannelNorm::make(dc)});
        }
        b.coarse_head = nn::Conv2d::make(rng, dc, 1, 1, 1, 0);
        if (with_precise) b.precise_head = nn::Conv2d::make(rng, dc, 1, 1, 1, 0);
        return b;
    };
    dec_vis_ = make_branch(true);
    dec_ir_ = make_branch(true);
    {
        const int deepest = cfg_.msgd_stages.back();
        const int64_t dc = cfg_.decoder_channels;
        Gcm g;
        for (int d : cfg_.gcm_dilations)
            g.branches.push_back(nn::Conv2d::make(rng, sc[size_t(deepest - 1)], dc, 3, 1, d, d));
        g.norm = nn::ChannelNorm::make(dc);
        dec_fused_gcm_ = std::move(g);
        dec_fused_cbr_ = Cbr{nn::Conv2d::make(rng, dc, dc, 3, 1, 1), nn::ChannelNorm::make(dc)};
        dec_fused_head_ = nn::Conv2d::make(rng, dc, 1, 1, 1, 0);
    }
    final_merge_ = nn::Conv2d::make(rng, 2, 1, 1, 1, 0);

    // registration (order defines the checkpoint layout)
    if (cfg_.backbone == Backbone::toy) {
        for (int i = 0; i < 5; ++i) {
            toy_[size_t(i)].conv.register_params(params_, "bb.s" + std::to_string(i + 1));
            toy_[size_t(i)].norm.register_params(params_, "bb.n" + std::to_string(i + 1));
        }
    } else {
        rn_stem_.register_params(params_, "bb.stem");
        rn_stem_norm_.register_params(params_, "bb.stem_n");
        for (size_t l = 0; l < rn_layers_.size(); ++l)
            for (size_t b = 0; b < rn_layers_[l].size(); ++b) {
                const std::string p = "bb.l" + std::to_string(l) + ".b" + std::to_string(b);
                auto& blk = rn_layers_[l][b];
                blk.c1.register_params(params_, p + ".c1");
                blk.n1.register_params(params_, p + ".n1");
                blk.c2.register_params(params_, p + ".c2");
                blk.n2.register_params(params_, p + ".n2");
                if (blk.down.w.defined()) {
                    blk.down.register_params(params_, p + ".down");
                    blk.down_n.register_params(params_, p + ".down_n");
                }
            }
    }
    for (auto& [s, f] : fgse_) {
        const std::string p = "fgse" + std::to_string(s);
        f.sem_cr_vis.register_params(params_, p + ".cr_vis");
        if (!cfg_.tie_fgse_branches) f.sem_cr_ir.register_params(params_, p + ".cr_ir");
        f.sem_cs.register_params(params_, p + ".cs");
        f.q_vis.register_params(params_, p + ".q_vis");
        f.k_vis.register_params(params_, p + ".k_vis");
        f.v_vis.register_params(params_, p + ".v_vis");
        if (!cfg_.tie_fgse_branches) {
            f.q_ir.register_params(params_, p + ".q_ir");
            f.k_ir.register_params(params_, p + ".k_ir");
            f.v_ir.register_params(params_, p + ".v_ir");
        }
        f.lfs_fc1.register_params(params_, p + ".lfs_fc1");
        f.lfs_fc2.register_params(params_, p + ".lfs_fc2");
        f.lfs_merge.register_params(params_, p + ".lfs_merge");
    }
    auto reg_branch = [this](const DecoderBranch& b, const std::string& p) {
        for (const auto& [s, g] : b.gcm) {
            for (size_t i = 0; i < g.branches.size(); ++i)
                g.branches[i].register_params(params_, p + ".gcm" + std::to_string(s) + ".d" +
                                                             std::to_string(i));
            g.norm.register_params(params_, p + ".gcm" + std::to_string(s) + ".n");
        }
        for (const auto& [s, c] : b.cbr) {
            c.conv.register_params(params_, p + ".cbr" + std::to_string(s));
            c.norm.register_params(params_, p + ".cbrn" + std::to_string(s));
        }
        b.coarse_head.register_params(params_, p + ".coarse");
        if (b.precise_head.w.defined()) b.precise_head.register_params(params_, p + ".precise");
    };
    reg_branch(dec_vis_, "dec_vis");
    reg_branch(dec_ir_, "dec_ir");
    for (size_t i = 0; i < dec_fused_gcm_.branches.size(); ++i)
        dec_fused_gcm_.branches[i].register_params(params_, "dec_fused.gcm.d" + std::to_string(i));
    dec_fused_gcm_.norm.register_params(params_, "dec_fused.gcm.n");
    dec_fused_cbr_.conv.register_params(params_, "dec_fused.cbr");
    dec_fused_cbr_.norm.register_params(params_, "dec_fused.cbrn");
    dec_fused_head_.register_params(params_, "dec_fused.coarse");
    if (cfg_.aggregation == FinalAggregation::learned)
        final_merge_.register_params(params_, "final_merge");
}

// ---- backbone ---------------------------------------------------------------

ag::Var SodNet::backbone_stage(int stage, const Var& x) const {
    if (cfg_.backbone == Backbone::toy) {
        const auto& s = toy_[size_t(stage - 1)];
        return ag::relu(s.norm(s.conv(x)));
    }
    if (stage == 1) return ag::relu(rn_stem_norm_(rn_stem_(x)));
    Var h = x;
    if (stage == 2) h = ag::max_pool2d(h, 3, 2, 1);
    for (const auto& blk : rn_layers_[size_t(stage - 2)]) {
        Var identity = h;
        if (blk.down.w.defined()) identity = blk.down_n(blk.down(h));
        Var y = blk.n2(blk.c2(ag::relu(blk.n1(blk.c1(h)))));
        h = ag::relu(ag::add(y, identity));
    }
    return h;
}

// ---- FGSE ---------------------------------------------------------------------

std::pair<Var, Var> SodNet::sem(int stage, const Var& x_vis, const Var& x_ir,
                                const Var& x_fused) const {
    check_same_shape(x_vis.value(), x_ir.value(), "sem");
    check_same_shape(x_vis.value(), x_fused.value(), "sem");
    const auto& f = fgse_.at(stage);
    const Var gate = ag::sigmoid(f.sem_cs(x_fused));
    const Var bar_vis = ag::add(x_vis, ag::mul(ag::relu(f.sem_cr_vis(x_vis)), gate));
    const Var bar_ir = ag::add(x_ir, ag::mul(ag::relu(f.sem_cr_ir(x_ir)), gate));
    return {bar_vis, bar_ir};
}

namespace {

Var multihead_sigmoid_attention(const Var& q, const Var& k, const Var& v, int heads,
                                int64_t c, int64_t h, int64_t w) {
    const int64_t ch = c / heads;
    const double scale = 1.0 / std::sqrt(double(ch));
    std::vector<Var> outs;
    outs.reserve(size_t(heads));
    for (int i = 0; i < heads; ++i) {
        const Var qt = ag::to_tokens(ag::slice_ch(q, i * ch, (i + 1) * ch));
        const Var kt = ag::to_tokens(ag::slice_ch(k, i * ch, (i + 1) * ch));
        const Var vt = ag::to_tokens(ag::slice_ch(v, i * ch, (i + 1) * ch));
        outs.push_back(ag::from_tokens(ag::attention_sigmoid(qt, kt, vt, scale), ch, h, w));
    }
    return heads == 1 ? outs[0] : ag::concat_ch(outs);
}

} // namespace

std::pair<Var, Var> SodNet::c2ftl(int stage, const Var& bar_vis, const Var& bar_ir,
                                  const Var& prev_vis, const Var& prev_ir) const {
    check_same_shape(bar_vis.value(), bar_ir.value(), "c2ftl");
    const auto& f = fgse_.at(stage);
    const auto& s = bar_vis.value().shape();
    const int64_t c = s[0], h = s[1], w = s[2];
    if (h * w > cfg_.token_cap)
        throw ShapeError("c2ftl: " + std::to_string(h * w) + " tokens exceed the configured cap of " +
                         std::to_string(cfg_.token_cap) +
                         " (reduce fgse_stages or raise token_cap)");

    // visible queries attend over infrared keys/values, and vice versa
    const Var attn_vis = multihead_sigmoid_attention(f.q_vis(bar_vis), f.k_ir(bar_ir),
                                                     f.v_ir(bar_ir), cfg_.attn_heads, c, h, w);
    const Var attn_ir = multihead_sigmoid_attention(f.q_ir(bar_ir), f.k_vis(bar_vis),
                                                    f.v_vis(bar_vis), cfg_.attn_heads, c, h, w);
    return {ag::add(attn_vis, prev_vis), ag::add(attn_ir, prev_ir)};
}

std::pair<Var, Var> SodNet::lfs_weights(int stage, const Var& tilde_vis,
                                        const Var& tilde_ir) const {
    check_same_shape(tilde_vis.value(), tilde_ir.value(), "lfs");
    const auto& f = fgse_.at(stage);
    const int64_t c = tilde_vis.value().shape(0);

    // pooled descriptors -> squeeze-excitation -> per-channel modality softmax
    const Var pooled = ag::concat_ch({ag::reshape(ag::global_avg_pool(tilde_vis), {c, 1, 1}),
                                      ag::reshape(ag::global_avg_pool(tilde_ir), {c, 1, 1})});
    const Var se = f.lfs_fc2(ag::relu(f.lfs_fc1(ag::reshape(pooled, {2 * c}))));
    const Var se_chw = ag::reshape(se, {2 * c, 1, 1});
    const Var a = ag::reshape(ag::slice_ch(se_chw, 0, c), {c});
    const Var b = ag::reshape(ag::slice_ch(se_chw, c, 2 * c), {c});
    const Var w_vis = ag::sigmoid(ag::sub(a, b)); // two-way softmax
    const Var w_ir = ag::sub(Var::constant(Tensor::full({c}, 1.0)), w_vis);
    return {w_vis, w_ir};
}

std::pair<Var, Var> SodNet::lfs(int stage, const Var& tilde_vis, const Var& tilde_ir) const {
    const auto& f = fgse_.at(stage);
    const auto [w_vis, w_ir] = lfs_weights(stage, tilde_vis, tilde_ir);
    const Var mixed = f.lfs_merge(ag::concat_ch(
        {ag::scale_channels(tilde_vis, w_vis), ag::scale_channels(tilde_ir, w_ir)}));
    return {ag::add(mixed, tilde_vis), ag::add(mixed, tilde_ir)};
}

std::pair<Var, Var> SodNet::fgse(int stage, const Var& x_vis, const Var& x_ir,
                                 const Var& x_fused) const {
    auto [bar_vis, bar_ir] = sem(stage, x_vis, x_ir, x_fused);
    Var tilde_vis = bar_vis, tilde_ir = bar_ir;
    if (cfg_.use_c2ftl) {
        auto t = c2ftl(stage, bar_vis, bar_ir, x_vis, x_ir);
        tilde_vis = t.first;
        tilde_ir = t.second;
    }
    if (cfg_.use_lfs) return lfs(stage, tilde_vis, tilde_ir);
    return {tilde_vis, tilde_ir};
}

// ---- encoder / decoder ---------------------------------------------------------

EncodedStreams SodNet::siamese_encode(const Var& ir3, const Var& guide3, const Var& vis3) const {
    check_same_shape(ir3.value(), guide3.value(), "siamese_encode");
    check_same_shape(ir3.value(), vis3.value(), "siamese_encode");
    if (ir3.value().ndim() != 3 || ir3.value().shape(0) != 3)
        throw ShapeError("siamese_encode expects (3,H,W) inputs");

    EncodedStreams enc;
    enc.input_h = ir3.value().shape(1);
    enc.input_w = ir3.value().shape(2);
    Var f_vis = vis3, f_ir = ir3, f_u = guide3;
    for (int stage = 1; stage <= 5; ++stage) {
        f_vis = backbone_stage(stage, f_vis);
        f_ir = backbone_stage(stage, f_ir);
        f_u = backbone_stage(stage, f_u);
        if (fgse_.count(stage)) {
            auto [nv, ni] = fgse(stage, f_vis, f_ir, f_u);
            f_vis = nv;
            f_ir = ni;
        }
        enc.vis.emplace(stage, f_vis);
        enc.ir.emplace(stage, f_ir);
        enc.fused.emplace(stage, f_u);
    }
    return enc;
}

ag::Var SodNet::run_gcm(const Gcm& g, const Var& x) const {
    Var acc = g.branches[0](x);
    for (size_t i = 1; i < g.branches.size(); ++i) acc = ag::add(acc, g.branches[i](x));
    return ag::relu(g.norm(acc));
}

ag::Var SodNet::run_cbr(const Cbr& c, const Var& x) const { return ag::relu(c.norm(c.conv(x))); }

ag::Var SodNet::decode_branch(const DecoderBranch& b, const std::map<int, ag::Var>& pyr,
                              Var& coarse_logit) const {
    // top-down cascade over the configured stages (deepest first)
    Var d;
    for (auto it = cfg_.msgd_stages.rbegin(); it != cfg_.msgd_stages.rend(); ++it) {
        const int s = *it;
        auto pit = pyr.find(s);
        if (pit == pyr.end()) throw ShapeError("msgd_decode: missing stage " + std::to_string(s));
        Var g = run_gcm(b.gcm.at(s), pit->second);
        if (!d.defined()) {
            d = run_cbr(b.cbr.at(s), g);
            coarse_logit = b.coarse_head(d);
        } else {
            const Var up = ag::upsample_bilinear(d, g.value().shape(1), g.value().shape(2));
            d = run_cbr(b.cbr.at(s), ag::add(g, up));
        }
    }
    return b.precise_head.w.defined() ? b.precise_head(d) : d;
}

ag::Var SodNet::upsample_sigmoid(const Var& logit, int64_t h, int64_t w) const {
    return ag::sigmoid(ag::upsample_bilinear(logit, h, w));
}

SaliencyVars SodNet::msgd_decode(const EncodedStreams& enc) const {
    const int64_t h = enc.input_h, w = enc.input_w;
    SaliencyVars out;

    Var coarse_vis_logit, coarse_ir_logit;
    const Var precise_vis_logit = decode_branch(dec_vis_, enc.vis, coarse_vis_logit);
    const Var precise_ir_logit = decode_branch(dec_ir_, enc.ir, coarse_ir_logit);

    const int deepest = cfg_.msgd_stages.back();
    auto fit = enc.fused.find(deepest);
    if (fit == enc.fused.end())
        throw ShapeError("msgd_decode: missing stage " + std::to_string(deepest));
    const Var fused_logit =
        dec_fused_head_(run_cbr(dec_fused_cbr_, run_gcm(dec_fused_gcm_, fit->second)));

    out.coarse_vis = upsample_sigmoid(coarse_vis_logit, h, w);
    out.coarse_ir = upsample_sigmoid(coarse_ir_logit, h, w);
    out.coarse_fused = upsample_sigmoid(fused_logit, h, w);
    out.precise_vis = upsample_sigmoid(precise_vis_logit, h, w);
    out.precise_ir = upsample_sigmoid(precise_ir_logit, h, w);

    const Var pv = ag::upsample_bilinear(precise_vis_logit, h, w);
    const Var pi = ag::upsample_bilinear(precise_ir_logit, h, w);
    switch (cfg_.aggregation) {
    case FinalAggregation::mean:
        out.final_map = ag::sigmoid(ag::mul_scalar(ag::add(pv, pi), 0.5));
        break;
    case FinalAggregation::max:
        // max(a,b) = a + relu(b-a)
        out.final_map = ag::sigmoid(ag::add(pv, ag::relu(ag::sub(pi, pv))));
        break;
    case FinalAggregation::learned:
        out.final_map = ag::sigmoid(final_merge_(ag::concat_ch({pv, pi})));
        break;
    }
    return out;
}

SaliencyVars SodNet::forward(const Var& ir3, const Var& guide3, const Var& vis3) const {
    return msgd_decode(siamese_encode(ir3, guide3, vis3));
}

std::array<FeaturePyramid, 3> SodNet::encode_pyramids(const Tensor& ir3, const Tensor& guide3,
                                                      const Tensor& vis3) const {
    const EncodedStreams enc =
        siamese_encode(Var::constant(ir3), Var::constant(guide3), Var::constant(vis3));
    std::array<FeaturePyramid, 3> out;
    out[0].modality = Modality::infrared;
    out[1].modality = Modality::fused;
    out[2].modality = Modality::visible;
    for (int s = 1; s <= 5; ++s) {
        out[0].stages.emplace(s, enc.ir.at(s).value());
        out[1].stages.emplace(s, enc.fused.at(s).value());
        out[2].stages.emplace(s, enc.vis.at(s).value());
    }
    for (auto& p : out) p.validate(cfg_.stage_channels);
    return out;
}

Tensor SodNet::to_chw3(const Tensor& img) {
    if (img.ndim() != 3) throw ShapeError("to_chw3: expected (H,W,C) image");
    const int64_t h = img.shape(0), w = img.shape(1), c = img.shape(2);
    Tensor out({3, h, w});
    if (c == 3) {
        for (int64_t p = 0; p < h * w; ++p)
            for (int64_t ch = 0; ch < 3; ++ch) out[ch * h * w + p] = img[3 * p + ch];
    } else if (c == 1) {
        for (int64_t p = 0; p < h * w; ++p)
            for (int64_t ch = 0; ch < 3; ++ch) out[ch * h * w + p] = img[p];
    } else {
        throw ShapeError("to_chw3: expected 1 or 3 channels, got " + std::to_string(c));
    }
    return out;
}

Tensor SodNet::make_guidance(const MultimodalSample& sample, const FusedImage& fused,
                             Guidance mode) {
    switch (mode) {
    case Guidance::fused: return to_chw3(fused.rgb);
    case Guidance::ir: return to_chw3(sample.infrared);
    case Guidance::vis: return to_chw3(sample.visible);
    case Guidance::average: {
        Tensor vis = to_chw3(sample.visible);
        Tensor ir = to_chw3(sample.infrared);
        Tensor out = vis;
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = 0.5 * (vis[i] + ir[i]);
        return out;
    }
    }
    throw ConfigError("make_guidance: bad mode");
}

SaliencyOutputs SodNet::detect(const MultimodalSample& sample, const FusedImage& fused,
                               Guidance mode) const {
    validate_sample(sample);
    const Tensor ir3 = to_chw3(sample.infrared);
    const Tensor vis3 = to_chw3(sample.visible);
    const Tensor guide3 = make_guidance(sample, fused, mode);
    const SaliencyVars v =
        forward(Var::constant(ir3), Var::constant(guide3), Var::constant(vis3));
    const int64_t h = sample.height(), w = sample.width();
    auto plane = [&](const Var& x) { return x.value().reshaped({h, w}); };
    return SaliencyOutputs{plane(v.coarse_vis), plane(v.coarse_ir),   plane(v.coarse_fused),
                           plane(v.precise_vis), plane(v.precise_ir), plane(v.final_map)};
}

} // namespace irfs
