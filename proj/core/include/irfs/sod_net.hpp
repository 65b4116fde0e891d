#pragma once

#include <array>
#include <map>

#include "irfs/autograd.hpp"
#include "irfs/fusion_net.hpp"
#include "irfs/nn.hpp"
#include "irfs/types.hpp"

namespace irfs {

enum class Backbone { toy, resnet34 };

/// Third encoder stream fed alongside the IR and visible images.
enum class Guidance { fused, average, ir, vis };

/// How the two precise logit maps combine into the final map.
enum class FinalAggregation { mean, max, learned };

std::string to_string(Backbone b);
std::string to_string(Guidance g);
std::string to_string(FinalAggregation a);

struct SodNetConfig {
    Backbone backbone = Backbone::toy;
    std::vector<int64_t> stage_channels = {16, 32, 64, 128, 256};
    int attn_heads = 1;
    std::vector<int> msgd_stages = {3, 4, 5}; // fed to the group decoder
    std::vector<int> gcm_dilations = {1, 2, 4};
    std::vector<int> fgse_stages = {1, 2, 3, 4, 5}; // cross-modal aggregation points
    int64_t token_cap = 4096;  // attention guard: H*W tokens per stage
    bool use_c2ftl = true;     // ablation switch
    bool use_lfs = true;       // ablation switch
    bool tie_fgse_branches = false;
    FinalAggregation aggregation = FinalAggregation::mean;
    int decoder_channels = 32;
    int lfs_reduction = 4;

    void validate() const;
    bool operator==(const SodNetConfig&) const = default;
};

/// Per-stream stage features kept as graph nodes during training.
struct EncodedStreams {
    std::map<int, ag::Var> vis, ir, fused;
    int64_t input_h = 0, input_w = 0;
};

/// Graph-node view of the decoder outputs (maps in [0,1], logits unbounded).
struct SaliencyVars {
    ag::Var coarse_vis, coarse_ir, coarse_fused;
    ag::Var precise_vis, precise_ir;
    ag::Var final_map;
};

/// Fusion-guided cross-complementary saliency detector: a siamese encoder
/// over {ir, guidance, visible} with per-stage cross-modal enhancement, and
/// a modality-specific group decoder emitting coarse/precise/final maps.
class SodNet {
public:
    SodNet(const SodNetConfig& cfg, Rng& rng);

    const SodNetConfig& config() const { return cfg_; }
    nn::ParamRegistry& params() { return params_; }
    const nn::ParamRegistry& params() const { return params_; }

    // FGSE stages, exposed individually for tests
    std::pair<ag::Var, ag::Var> sem(int stage, const ag::Var& x_vis, const ag::Var& x_ir,
                                    const ag::Var& x_fused) const;
    std::pair<ag::Var, ag::Var> c2ftl(int stage, const ag::Var& bar_vis, const ag::Var& bar_ir,
                                      const ag::Var& prev_vis, const ag::Var& prev_ir) const;
    std::pair<ag::Var, ag::Var> lfs(int stage, const ag::Var& tilde_vis,
                                    const ag::Var& tilde_ir) const;
    /// Per-channel modality selector weights (w_vis, w_ir); w_vis + w_ir == 1.
    std::pair<ag::Var, ag::Var> lfs_weights(int stage, const ag::Var& tilde_vis,
                                            const ag::Var& tilde_ir) const;
    std::pair<ag::Var, ag::Var> fgse(int stage, const ag::Var& x_vis, const ag::Var& x_ir,
                                     const ag::Var& x_fused) const;

    /// Shared-weight backbone over the three streams with FGSE updates after
    /// each configured stage. Inputs are (3,H,W).
    EncodedStreams siamese_encode(const ag::Var& ir3, const ag::Var& guide3,
                                  const ag::Var& vis3) const;

    /// Group decoder over the configured stages.
    SaliencyVars msgd_decode(const EncodedStreams& enc) const;

    SaliencyVars forward(const ag::Var& ir3, const ag::Var& guide3, const ag::Var& vis3) const;

    /// Value-level pyramids for the declared pyramid contract.
    std::array<FeaturePyramid, 3> encode_pyramids(const Tensor& ir3, const Tensor& guide3,
                                                  const Tensor& vis3) const;

    /// Inference convenience; guidance selected per `mode`.
    SaliencyOutputs detect(const MultimodalSample& sample, const FusedImage& fused,
                           Guidance mode = Guidance::fused) const;

    /// Builds the (3,H,W) guidance stream for `mode`.
    static Tensor make_guidance(const MultimodalSample& sample, const FusedImage& fused,
                                Guidance mode);
    /// (H,W,1) -> (3,H,W) replication, (H,W,3) -> (3,H,W) layout change.
    static Tensor to_chw3(const Tensor& img);

private:
    struct ToyStage {
        nn::Conv2d conv;
        nn::ChannelNorm norm;
    };
    struct BasicBlock {
        nn::Conv2d c1, c2;
        nn::ChannelNorm n1, n2;
        nn::Conv2d down; // defined when shape changes
        nn::ChannelNorm down_n;
    };
    struct FgseBlock {
        nn::Conv2d sem_cr_vis, sem_cr_ir, sem_cs;
        nn::Conv2d q_vis, k_vis, v_vis, q_ir, k_ir, v_ir;
        nn::Linear lfs_fc1, lfs_fc2;
        nn::Conv2d lfs_merge;
    };
    struct Gcm {
        std::vector<nn::Conv2d> branches;
        nn::ChannelNorm norm;
    };
    struct Cbr {
        nn::Conv2d conv;
        nn::ChannelNorm norm;
    };
    struct DecoderBranch {
        std::map<int, Gcm> gcm;
        std::map<int, Cbr> cbr;
        nn::Conv2d coarse_head, precise_head;
    };

    ag::Var backbone_stage(int stage, const ag::Var& x) const;
    ag::Var run_gcm(const Gcm& g, const ag::Var& x) const;
    ag::Var run_cbr(const Cbr& c, const ag::Var& x) const;
    ag::Var decode_branch(const DecoderBranch& b, const std::map<int, ag::Var>& pyr,
                          ag::Var& coarse_logit) const; // returns precise logit input stage
    ag::Var upsample_sigmoid(const ag::Var& logit, int64_t h, int64_t w) const;

    SodNetConfig cfg_;
    // backbone
    std::vector<ToyStage> toy_;                     // 5 stages
    nn::Conv2d rn_stem_;                            // resnet34 stem
    nn::ChannelNorm rn_stem_norm_;
    std::vector<std::vector<BasicBlock>> rn_layers_; // 4 layers
    // cross-modal blocks and decoder
    std::map<int, FgseBlock> fgse_;
    DecoderBranch dec_vis_, dec_ir_;
    Gcm dec_fused_gcm_;
    Cbr dec_fused_cbr_;
    nn::Conv2d dec_fused_head_;
    nn::Conv2d final_merge_; // used by FinalAggregation::learned
    nn::ParamRegistry params_;
};

} // namespace irfs
