#include "irfs/types.hpp"

#include <cmath>

namespace irfs {

namespace {

void check_range01(const Tensor& t, const std::string& field) {
    for (int64_t i = 0; i < t.numel(); ++i) {
        const double v = t[i];
        if (!(v >= 0.0 && v <= 1.0))
            throw RangeError(field + ": value " + std::to_string(v) + " outside [0,1]");
    }
}

} // namespace

const MultimodalSample& validate_sample(const MultimodalSample& s) {
    if (s.visible.ndim() != 3 || s.visible.shape(2) != 3)
        throw ShapeError("visible: expected (H,W,3), got " + s.visible.shape_str());
    if (s.infrared.ndim() != 3 || s.infrared.shape(2) != 1)
        throw ShapeError("infrared: expected (H,W,1), got " + s.infrared.shape_str());
    const int64_t h = s.visible.shape(0), w = s.visible.shape(1);
    if (s.infrared.shape(0) != h || s.infrared.shape(1) != w)
        throw ShapeError("infrared: size " + s.infrared.shape_str() + " does not match visible (" +
                         std::to_string(h) + "," + std::to_string(w) + ",3)");
    check_range01(s.visible, "visible");
    check_range01(s.infrared, "infrared");
    if (s.mask) {
        if (s.mask->ndim() != 2 || s.mask->shape(0) != h || s.mask->shape(1) != w)
            throw ShapeError("mask: size " + s.mask->shape_str() + " does not match visible");
        for (int64_t i = 0; i < s.mask->numel(); ++i) {
            const double v = (*s.mask)[i];
            if (v != 0.0 && v != 1.0)
                throw RangeError("mask: value " + std::to_string(v) + " is not binary");
        }
    }
    return s;
}

std::string to_string(Modality m) {
    switch (m) {
    case Modality::visible: return "visible";
    case Modality::infrared: return "infrared";
    case Modality::fused: return "fused";
    }
    return "?";
}

const Tensor& FeaturePyramid::stage(int i) const {
    auto it = stages.find(i);
    if (it == stages.end())
        throw ShapeError("feature pyramid: missing stage " + std::to_string(i));
    return it->second;
}

void FeaturePyramid::validate(const std::vector<int64_t>& stage_channels) const {
    int64_t prev_h = INT64_MAX, prev_w = INT64_MAX;
    for (const auto& [i, t] : stages) {
        if (t.ndim() != 3) throw ShapeError("pyramid stage " + std::to_string(i) + " is not CHW");
        if (i >= 1 && i <= int(stage_channels.size()) && t.shape(0) != stage_channels[size_t(i - 1)])
            throw ShapeError("pyramid stage " + std::to_string(i) + ": expected " +
                             std::to_string(stage_channels[size_t(i - 1)]) + " channels, got " +
                             std::to_string(t.shape(0)));
        if (t.shape(1) > prev_h || t.shape(2) > prev_w)
            throw ShapeError("pyramid stage " + std::to_string(i) +
                             ": spatial size increases with depth");
        prev_h = t.shape(1);
        prev_w = t.shape(2);
    }
}

void LoopSchedule::validate() const {
    if (m < 1 || n_f < 1 || n_s < 1)
        throw ConfigError("loop schedule: m, n_f, n_s must all be positive");
    if (lr_fusion <= 0 || lr_sod_init <= 0 || lr_sod_floor <= 0)
        throw ConfigError("loop schedule: learning rates must be positive");
    if (tau <= 0 || eta_start <= 0 || eta_end < eta_start)
        throw ConfigError("loop schedule: need tau > 0 and eta_end >= eta_start > 0");
    if (batch_size < 1 || crop < 8) throw ConfigError("loop schedule: bad batch size or crop");
}

double LoopSchedule::eta(int loop) const {
    if (loop < 0 || loop >= m) throw ConfigError("eta: loop index out of range");
    if (m == 1) return eta_start;
    return eta_start + (eta_end - eta_start) * double(loop) / double(m - 1);
}

double LoopSchedule::lr_sod(int epoch) const {
    if (epoch < 0 || epoch >= n_s) throw ConfigError("lr_sod: epoch index out of range");
    if (n_s == 1) return lr_sod_init;
    const double t = double(epoch) / double(n_s - 1);
    return lr_sod_floor + 0.5 * (lr_sod_init - lr_sod_floor) * (1.0 + std::cos(M_PI * t));
}

} // namespace irfs
