#pragma once

#include "irfs/autograd.hpp"
#include "irfs/nn.hpp"
#include "irfs/types.hpp"

namespace irfs {

struct FusionNetConfig {
    int base_channels = 16; // width of the coarse features
    int n_res_blocks = 4;   // reconstruction depth
    int sa_kernel = 7;      // spatial-attention conv kernel (odd)
    int ca_reduction = 4;   // channel-attention bottleneck ratio
    bool share_branch_weights = false;
    double leaky_slope = 0.2;

    void validate() const;
    bool operator==(const FusionNetConfig&) const = default;
};

/// Coarse conv features of the two branches, same (C,H,W) shape each.
struct CoarseFeatures {
    ag::Var vis, ir;
};

/// Feature-screening fusion network: coarse extraction per branch, dual
/// attention-guided screening, element-wise fusion, residual reconstruction
/// of the fused luma plane. All ops preserve the input resolution.
class FusionNet {
public:
    FusionNet(const FusionNetConfig& cfg, Rng& rng);

    const FusionNetConfig& config() const { return cfg_; }
    nn::ParamRegistry& params() { return params_; }
    const nn::ParamRegistry& params() const { return params_; }

    /// Both coarse extractors; inputs are (1,H,W) luma/infrared planes.
    CoarseFeatures extract_coarse(const ag::Var& y_vis, const ag::Var& ir) const;

    /// Dual attention screening of one branch's coarse features.
    ag::Var dafs_screen(const ag::Var& coarse, Modality branch) const;

    /// Element-wise sum of the screened branch features.
    static ag::Var fuse_features(const ag::Var& p_vis, const ag::Var& p_ir);

    /// Residual reconstruction to a single bounded luma plane (1,H,W) in [0,1].
    ag::Var reconstruct(const ag::Var& fused) const;

    /// Full differentiable pipeline (1,H,W) x (1,H,W) -> (1,H,W).
    ag::Var forward_y(const ag::Var& y_vis, const ag::Var& ir) const;

    /// Inference convenience over a validated sample; recombines the fused
    /// luma with the visible chroma to produce the RGB image.
    FusedImage fuse_pair(const MultimodalSample& sample) const;

private:
    struct Branch {
        nn::Conv2d coarse1, coarse2;
        nn::Conv2d sa_conv;       // spatial attention over [mean_c; max_c]
        nn::Linear ca_fc1, ca_fc2; // shared MLP for avg/max pooled vectors
        nn::Conv2d merge;          // 1x1 over [SA(x), CA(x)]
    };

    Branch make_branch(Rng& rng) const;
    ag::Var run_coarse(const Branch& b, const ag::Var& x) const;
    ag::Var run_dafs(const Branch& b, const ag::Var& x) const;
    const Branch& branch(Modality m) const;

    FusionNetConfig cfg_;
    Branch vis_, ir_;
    struct ResBlock {
        nn::Conv2d c1, c2;
    };
    std::vector<ResBlock> res_;
    nn::Conv2d proj_;
    nn::ParamRegistry params_;
};

} // namespace irfs
