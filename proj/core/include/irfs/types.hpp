#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "irfs/tensor.hpp"

namespace irfs {

/// One aligned visible/infrared pair with an optional binary saliency mask.
/// Images are channel-last at this boundary: visible (H,W,3), infrared
/// (H,W,1), mask (H,W) with values in {0,1}.
struct MultimodalSample {
    Tensor visible;
    Tensor infrared;
    std::optional<Tensor> mask;
    std::string id;

    int64_t height() const { return visible.shape(0); }
    int64_t width() const { return visible.shape(1); }
};

/// Throws ShapeError / RangeError naming the offending field; returns the
/// sample unchanged when every invariant holds.
const MultimodalSample& validate_sample(const MultimodalSample& sample);

/// Output of the fusion network: the fused luma plane plus the RGB
/// recombination with the visible image's chroma.
struct FusedImage {
    Tensor y_channel; // (H,W,1), values in [0,1]
    Tensor rgb;       // (H,W,3), values in [0,1]
    std::string provenance;
};

enum class Modality { visible, infrared, fused };

std::string to_string(Modality m);

/// Multi-scale feature maps indexed by backbone stage 1..5, channel-first.
struct FeaturePyramid {
    std::map<int, Tensor> stages;
    Modality modality = Modality::visible;

    const Tensor& stage(int i) const;
    /// Enforces monotonically non-increasing spatial size and the given
    /// per-stage channel widths.
    void validate(const std::vector<int64_t>& stage_channels) const;
};

/// The six saliency maps produced per input: three coarse, two precise, and
/// the final aggregated map. All (H,W) at input resolution, values in [0,1].
struct SaliencyOutputs {
    Tensor coarse_vis, coarse_ir, coarse_fused;
    Tensor precise_vis, precise_ir;
    Tensor final_map;
};

/// Hyperparameters of the alternating loop training strategy.
struct LoopSchedule {
    int m = 10;                // interaction loops
    int n_f = 3;               // fusion epochs per loop
    int n_s = 10;              // detection epochs per loop
    double lr_fusion = 1e-3;   // constant
    double lr_sod_init = 5e-5; // cosine-annealed per loop ...
    double lr_sod_floor = 1e-6; // ... down to this floor
    double tau = 1.0;
    double eta_start = 1.0;
    double eta_end = 10.0;
    int batch_size = 8;
    int crop = 352;

    void validate() const;
    /// Non-decreasing ramp from eta_start to eta_end across the m loops.
    double eta(int loop) const;
    /// Cosine-annealed detection learning rate for epoch e in [0, n_s).
    double lr_sod(int epoch) const;
};

/// Aggregate metric values with dataset provenance.
struct MetricReport {
    struct Fusion {
        double mi = 0, vif = 0, cc = 0;
    } fusion;
    struct Sod {
        double s_alpha = 0, f_beta = 0, e_xi = 0, mae = 0;
    } sod;
    std::string dataset;
    int n_samples = 0;
};

} // namespace irfs
