#pragma once

#include "irfs/tensor.hpp"

namespace irfs {

/// Y/Cb/Cr planes, each (H,W,1), full-range in [0,1].
struct YCbCr {
    Tensor y, cb, cr;
};

/// BT.601 full-range forward conversion of an (H,W,3) RGB image in [0,1].
/// Black maps to (0, 0.5, 0.5), white to (1, 0.5, 0.5).
YCbCr to_ycbcr(const Tensor& rgb);

/// Exact inverse of to_ycbcr; output clamped to [0,1].
Tensor ycbcr_to_rgb(const YCbCr& planes);

/// Luma plane only (same coefficients as to_ycbcr).
Tensor rgb_to_gray(const Tensor& rgb);

} // namespace irfs
