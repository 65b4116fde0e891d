#include "irfs/fusion_net.hpp"

#include "irfs/color.hpp"

namespace irfs {

using ag::Var;

void FusionNetConfig::validate() const {
    if (base_channels < 4) throw ConfigError("fusion net: base_channels must be >= 4");
    if (n_res_blocks < 1) throw ConfigError("fusion net: n_res_blocks must be >= 1");
    if (sa_kernel < 1 || sa_kernel % 2 == 0)
        throw ConfigError("fusion net: sa_kernel must be odd and positive");
    if (ca_reduction < 1 || ca_reduction > base_channels)
        throw ConfigError("fusion net: ca_reduction must be in [1, base_channels]");
}

FusionNet::Branch FusionNet::make_branch(Rng& rng) const {
    const int64_t c = cfg_.base_channels;
    Branch b;
    b.coarse1 = nn::Conv2d::make(rng, 1, c, 3, 1, 1);
    b.coarse2 = nn::Conv2d::make(rng, c, c, 3, 1, 1);
    b.sa_conv = nn::Conv2d::make(rng, 2, 1, cfg_.sa_kernel, 1, (cfg_.sa_kernel - 1) / 2);
    const int64_t hidden = std::max<int64_t>(1, c / cfg_.ca_reduction);
    b.ca_fc1 = nn::Linear::make(rng, c, hidden);
    b.ca_fc2 = nn::Linear::make(rng, hidden, c);
    b.merge = nn::Conv2d::make(rng, 2 * c, c, 1, 1, 0);
    return b;
}

FusionNet::FusionNet(const FusionNetConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    vis_ = make_branch(rng);
    ir_ = cfg_.share_branch_weights ? vis_ : make_branch(rng);

    const int64_t c = cfg_.base_channels;
    res_.resize(size_t(cfg_.n_res_blocks));
    for (auto& rb : res_) {
        rb.c1 = nn::Conv2d::make(rng, c, c, 3, 1, 1);
        rb.c2 = nn::Conv2d::make(rng, c, c, 3, 1, 1);
    }
    proj_ = nn::Conv2d::make(rng, c, 1, 3, 1, 1);

    auto reg_branch = [this](const Branch& b, const std::string& p) {
        b.coarse1.register_params(params_, p + ".coarse1");
        b.coarse2.register_params(params_, p + ".coarse2");
        b.sa_conv.register_params(params_, p + ".sa");
        b.ca_fc1.register_params(params_, p + ".ca_fc1");
        b.ca_fc2.register_params(params_, p + ".ca_fc2");
        b.merge.register_params(params_, p + ".merge");
    };
    reg_branch(vis_, "vis");
    if (!cfg_.share_branch_weights) reg_branch(ir_, "ir");
    for (size_t i = 0; i < res_.size(); ++i) {
        res_[i].c1.register_params(params_, "res" + std::to_string(i) + ".c1");
        res_[i].c2.register_params(params_, "res" + std::to_string(i) + ".c2");
    }
    proj_.register_params(params_, "proj");
}

const FusionNet::Branch& FusionNet::branch(Modality m) const {
    if (m == Modality::infrared) return ir_;
    return vis_;
}

ag::Var FusionNet::run_coarse(const Branch& b, const Var& x) const {
    return b.coarse2(ag::leaky_relu(b.coarse1(x), cfg_.leaky_slope));
}

CoarseFeatures FusionNet::extract_coarse(const Var& y_vis, const Var& ir) const {
    check_same_shape(y_vis.value(), ir.value(), "extract_coarse");
    return {run_coarse(vis_, y_vis), run_coarse(ir_, ir)};
}

ag::Var FusionNet::run_dafs(const Branch& b, const Var& x) const {
    if (x.value().shape(0) != cfg_.base_channels)
        throw ShapeError("dafs_screen: expected " + std::to_string(cfg_.base_channels) +
                         " channels, got " + std::to_string(x.value().shape(0)));
    // spatial gate over pooled channel statistics
    const Var sa_gate = ag::sigmoid(b.sa_conv(ag::concat_ch({ag::channel_mean(x), ag::channel_max(x)})));
    const Var sa = ag::mul_map(x, sa_gate);
    // channel gate from shared MLP over avg- and max-pooled descriptors
    auto mlp = [&](const Var& v) { return b.ca_fc2(ag::relu(b.ca_fc1(v))); };
    const Var ca_gate = ag::sigmoid(ag::add(mlp(ag::global_avg_pool(x)), mlp(ag::global_max_pool(x))));
    const Var ca = ag::scale_channels(x, ca_gate);
    return b.merge(ag::concat_ch({sa, ca}));
}

ag::Var FusionNet::dafs_screen(const Var& coarse, Modality m) const {
    return run_dafs(branch(m), coarse);
}

ag::Var FusionNet::fuse_features(const Var& p_vis, const Var& p_ir) {
    check_same_shape(p_vis.value(), p_ir.value(), "fuse_features");
    return ag::add(p_vis, p_ir);
}

ag::Var FusionNet::reconstruct(const Var& fused) const {
    if (fused.value().shape(0) != cfg_.base_channels)
        throw ShapeError("reconstruct: expected " + std::to_string(cfg_.base_channels) +
                         " channels, got " + std::to_string(fused.value().shape(0)));
    Var h = fused;
    for (const auto& rb : res_)
        h = ag::add(h, rb.c2(ag::leaky_relu(rb.c1(h), cfg_.leaky_slope)));
    // affine rescale from the residual trunk's natural [-1,1] range, then a
    // hard clamp; keeps gradients unit-scale inside the valid band
    Var y = proj_(h);
    return ag::clamp(ag::mul_scalar(ag::add_scalar(y, 1.0), 0.5), 0.0, 1.0);
}

ag::Var FusionNet::forward_y(const Var& y_vis, const Var& ir) const {
    const CoarseFeatures c = extract_coarse(y_vis, ir);
    const Var p_vis = run_dafs(vis_, c.vis);
    const Var p_ir = run_dafs(ir_, c.ir);
    return reconstruct(fuse_features(p_vis, p_ir));
}

FusedImage FusionNet::fuse_pair(const MultimodalSample& sample) const {
    validate_sample(sample);
    const YCbCr planes = to_ycbcr(sample.visible);
    const int64_t h = sample.height(), w = sample.width();

    const Var y_vis = Var::constant(planes.y.reshaped({1, h, w}));
    const Var ir = Var::constant(sample.infrared.reshaped({1, h, w}));
    const Var fused_y = forward_y(y_vis, ir);

    FusedImage out;
    out.provenance = sample.id;
    out.y_channel = fused_y.value().reshaped({h, w, 1});
    out.rgb = ycbcr_to_rgb({out.y_channel, planes.cb, planes.cr});
    return out;
}

} // namespace irfs
