#pragma once

#include "irfs/autograd.hpp"
#include "irfs/sod_net.hpp"
#include "irfs/tensor.hpp"

namespace irfs::losses {

struct FusionLossTerms {
    double intensity = 0;
    double gradient = 0;
    double total = 0;
    double lambda = 0.5;
    double gamma = 20.0;
};

struct SodLossTerms {
    double coarse = 0;
    double precise = 0;
    double total = 0;
};

/// Graph-node views used during training; scalar values mirror them.
struct FusionLossVars {
    ag::Var intensity, gradient, total;
    FusionLossTerms terms(double lambda, double gamma) const;
};

struct SodLossVars {
    ag::Var coarse, precise, total;
    SodLossTerms terms() const;
};

/// Raw histogram-contrast saliency of a single plane (values >= 0,
/// strictly positive everywhere for non-constant images).
Tensor saliency_contrast(const Tensor& img);

/// Min-max normalized histogram-contrast saliency in [0,1]. A constant
/// image yields the all-zero map.
Tensor saliency_matrix(const Tensor& img);

/// Per-pixel modality weights (w_ir, w_vis) from the raw contrast maps;
/// w_ir + w_vis == 1 exactly, both in [0,1].
std::pair<Tensor, Tensor> weight_maps(const Tensor& ir, const Tensor& y_vis);

/// Mean single-scale SSIM between two (1,H,W) planes in [0,1]; the Gaussian
/// window shrinks to fit small inputs.
ag::Var ssim(const ag::Var& a, const ag::Var& b);

/// Multi-scale SSIM with automatic scale reduction; equals ssim() when the
/// image only supports one scale.
ag::Var ms_ssim(const ag::Var& a, const ag::Var& b);

/// Saliency-weighted L1 + gamma * (1 - MS-SSIM) against the weighted target.
ag::Var intensity_loss(const Tensor& ir, const Tensor& y_vis, const ag::Var& fused, double gamma);

/// Mean L1 between the fused Laplacian and the per-pixel strongest source
/// Laplacian (sign of the larger-magnitude response wins).
ag::Var gradient_loss(const Tensor& ir, const Tensor& y_vis, const ag::Var& fused);

/// Laplacian response with reflect padding (plain helper).
Tensor laplacian(const Tensor& plane);

FusionLossVars fusion_loss(const Tensor& ir, const Tensor& y_vis, const ag::Var& fused,
                           double lambda, double gamma);

/// Boundary-weighted BCE + IoU on a prediction in [0,1] vs a binary mask.
/// `pool_window` controls the hard-region emphasis (1 disables it).
ag::Var wbce_wiou(const ag::Var& pred, const Tensor& gt, int pool_window = 15);

/// Coarse term over the three coarse maps, precise term over the two precise
/// maps; `average_maps` switches the per-group sum to a mean.
SodLossVars sod_loss(const SaliencyVars& outputs, const Tensor& gt, int pool_window = 15,
                     bool average_maps = false);

ag::Var overall_loss(const ag::Var& fusion_total, const ag::Var& sod_total, double tau, double eta);

/// Sensitivity grid for the fusion-loss weight sweep.
std::vector<double> tau_sweep_grid();

} // namespace irfs::losses
