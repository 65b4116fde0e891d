#include "irfs/color.hpp"

#include <algorithm>

namespace irfs {

namespace {

constexpr double kKr = 0.299;
constexpr double kKg = 0.587;
constexpr double kKb = 0.114;

void check_rgb(const Tensor& rgb) {
    if (rgb.ndim() != 3 || rgb.shape(2) != 3)
        throw ShapeError("expected (H,W,3) RGB image, got " + rgb.shape_str());
    for (int64_t i = 0; i < rgb.numel(); ++i)
        if (!(rgb[i] >= 0.0 && rgb[i] <= 1.0))
            throw RangeError("rgb: value " + std::to_string(rgb[i]) + " outside [0,1]");
}

} // namespace

YCbCr to_ycbcr(const Tensor& rgb) {
    check_rgb(rgb);
    const int64_t h = rgb.shape(0), w = rgb.shape(1);
    YCbCr out{Tensor({h, w, 1}), Tensor({h, w, 1}), Tensor({h, w, 1})};
    for (int64_t p = 0; p < h * w; ++p) {
        const double r = rgb[3 * p], g = rgb[3 * p + 1], b = rgb[3 * p + 2];
        const double y = kKr * r + kKg * g + kKb * b;
        out.y[p] = y;
        out.cb[p] = 0.5 + (b - y) / (2.0 * (1.0 - kKb));
        out.cr[p] = 0.5 + (r - y) / (2.0 * (1.0 - kKr));
    }
    return out;
}

Tensor ycbcr_to_rgb(const YCbCr& pl) {
    check_same_shape(pl.y, pl.cb, "ycbcr_to_rgb");
    check_same_shape(pl.y, pl.cr, "ycbcr_to_rgb");
    const int64_t h = pl.y.shape(0), w = pl.y.shape(1);
    Tensor rgb({h, w, 3});
    for (int64_t p = 0; p < h * w; ++p) {
        const double y = pl.y[p];
        const double cb = pl.cb[p] - 0.5, cr = pl.cr[p] - 0.5;
        const double r = y + 2.0 * (1.0 - kKr) * cr;
        const double b = y + 2.0 * (1.0 - kKb) * cb;
        const double g = (y - kKr * r - kKb * b) / kKg;
        rgb[3 * p] = std::clamp(r, 0.0, 1.0);
        rgb[3 * p + 1] = std::clamp(g, 0.0, 1.0);
        rgb[3 * p + 2] = std::clamp(b, 0.0, 1.0);
    }
    return rgb;
}

Tensor rgb_to_gray(const Tensor& rgb) {
    if (rgb.ndim() != 3 || rgb.shape(2) != 3)
        throw ShapeError("expected (H,W,3) RGB image, got " + rgb.shape_str());
    const int64_t h = rgb.shape(0), w = rgb.shape(1);
    Tensor y({h, w, 1});
    for (int64_t p = 0; p < h * w; ++p)
        y[p] = kKr * rgb[3 * p] + kKg * rgb[3 * p + 1] + kKb * rgb[3 * p + 2];
    return y;
}

} // namespace irfs
