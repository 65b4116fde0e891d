#pragma once

#include <array>
#include <string>
#include <vector>

#include "irfs/tensor.hpp"
#include "irfs/types.hpp"

namespace irfs::metrics {

/// 256-bin joint histogram of two planes (after per-image min-max
/// normalization), with consistent marginals.
struct HistogramPair {
    Tensor joint;            // (256,256), sums to 1
    std::array<double, 256> marg_a{}, marg_b{};

    void validate() const; // marginals match joint row/col sums within 1e-9
};

HistogramPair joint_histogram(const Tensor& a, const Tensor& b);

/// Entropy in bits of the 256-bin intensity distribution.
double entropy_bits(const Tensor& img);

/// Mutual information transported from both sources into the fused image
/// (sum of the two pairwise terms, log base 2).
double mi(const Tensor& ir, const Tensor& vis, const Tensor& fused);
double mi_pair(const Tensor& a, const Tensor& b);

struct CcResult {
    double value = 0;
    bool degenerate = false; // a zero-variance image forced r := 0
};

/// Mean of the two Pearson correlations against the fused image.
CcResult cc_checked(const Tensor& ir, const Tensor& vis, const Tensor& fused);
double cc(const Tensor& ir, const Tensor& vis, const Tensor& fused);

/// Pixel-domain visual information fidelity over 4 Gaussian pyramid scales,
/// summed over the two sources. Requires min dimension >= 8.
double vif(const Tensor& ir, const Tensor& vis, const Tensor& fused);
double vif_pair(const Tensor& ref, const Tensor& dist);

double mae(const Tensor& pred, const Tensor& gt);

struct FBetaResult {
    double value = 0;
    bool empty_prediction = false;
};

/// Adaptive-threshold F-measure (threshold 2*mean clamped to 1, beta^2=0.3).
FBetaResult f_beta_checked(const Tensor& pred, const Tensor& gt);
double f_beta(const Tensor& pred, const Tensor& gt);

/// Structure measure: 0.5 * object similarity + 0.5 * four-quadrant
/// region similarity around the mask centroid.
double s_measure(const Tensor& pred, const Tensor& gt);

/// Enhanced-alignment measure with adaptive binarization and quadratic
/// enhancement, averaged over pixels.
double e_measure(const Tensor& pred, const Tensor& gt);

/// Fixed evaluation constants, recorded in every report for auditability.
struct MetricConfig {
    int mi_bins = 256;
    int mi_log_base = 2;
    double f_beta_sq = 0.3;
    double s_alpha = 0.5;
    int vif_scales = 4;
    double vif_sigma_nsq = 2.0;
    std::string vif_source_mode = "summed";
};

/// Per-sample metric rows plus aggregate means.
struct EvaluationReport {
    MetricReport aggregate;
    std::vector<std::pair<std::string, MetricReport>> per_sample;
    MetricConfig config;
    std::vector<std::string> flags; // degenerate cases, empty predictions
};

std::string report_to_json(const EvaluationReport& report, bool fusion_block, bool sod_block);

} // namespace irfs::metrics
