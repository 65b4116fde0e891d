#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>

#include "irfs/data.hpp"

namespace irfs::data {

Tensor read_image(const fs::path& path) {
    const cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) throw DataError("cannot decode image: " + path.string());
    cv::Mat m8;
    if (m.depth() != CV_8U) {
        double scale = m.depth() == CV_16U ? 1.0 / 257.0 : 1.0;
        m.convertTo(m8, CV_8U, scale);
    } else {
        m8 = m;
    }
    const int64_t h = m8.rows, w = m8.cols;
    if (m8.channels() == 1) {
        Tensor out({h, w, 1});
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) out[(y * w + x)] = m8.at<uchar>(int(y), int(x)) / 255.0;
        return out;
    }
    if (m8.channels() != 3 && m8.channels() != 4)
        throw DataError("unsupported channel count in " + path.string());
    const int nc = m8.channels();
    Tensor out({h, w, 3});
    for (int64_t y = 0; y < h; ++y) {
        const uchar* row = m8.ptr<uchar>(int(y));
        for (int64_t x = 0; x < w; ++x) { // BGR(A) order on disk
            out[(y * w + x) * 3 + 0] = row[x * nc + 2] / 255.0;
            out[(y * w + x) * 3 + 1] = row[x * nc + 1] / 255.0;
            out[(y * w + x) * 3 + 2] = row[x * nc + 0] / 255.0;
        }
    }
    return out;
}

void write_png(const fs::path& path, const Tensor& img) {
    if (img.ndim() != 3 || (img.shape(2) != 1 && img.shape(2) != 3))
        throw DataError("write_png: expected (H,W,1) or (H,W,3), got " + img.shape_str());
    const int64_t h = img.shape(0), w = img.shape(1), c = img.shape(2);
    auto to_u8 = [](double v) {
        return uchar(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    };
    cv::Mat m;
    if (c == 1) {
        m = cv::Mat(int(h), int(w), CV_8UC1);
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) m.at<uchar>(int(y), int(x)) = to_u8(img[y * w + x]);
    } else {
        m = cv::Mat(int(h), int(w), CV_8UC3);
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                m.at<cv::Vec3b>(int(y), int(x)) =
                    cv::Vec3b(to_u8(img[(y * w + x) * 3 + 2]), to_u8(img[(y * w + x) * 3 + 1]),
                              to_u8(img[(y * w + x) * 3 + 0]));
    }
    fs::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), m)) throw DataError("cannot write PNG: " + path.string());
}

Tensor resize_bilinear(const Tensor& img, int64_t out_h, int64_t out_w) {
    if (img.ndim() != 3) throw ShapeError("resize_bilinear: expected (H,W,C)");
    const int64_t h = img.shape(0), w = img.shape(1), c = img.shape(2);
    Tensor out({out_h, out_w, c});
    const double sy = double(h) / double(out_h), sx = double(w) / double(out_w);
    for (int64_t oy = 0; oy < out_h; ++oy) {
        double fy = (double(oy) + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, double(h - 1));
        const int64_t y0 = int64_t(fy);
        const int64_t y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - double(y0);
        for (int64_t ox = 0; ox < out_w; ++ox) {
            double fx = (double(ox) + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, double(w - 1));
            const int64_t x0 = int64_t(fx);
            const int64_t x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - double(x0);
            for (int64_t ch = 0; ch < c; ++ch) {
                const double v = (1 - wy) * ((1 - wx) * img[(y0 * w + x0) * c + ch] +
                                             wx * img[(y0 * w + x1) * c + ch]) +
                                 wy * ((1 - wx) * img[(y1 * w + x0) * c + ch] +
                                       wx * img[(y1 * w + x1) * c + ch]);
                out[(oy * out_w + ox) * c + ch] = v;
            }
        }
    }
    return out;
}

Tensor resize_nearest(const Tensor& img, int64_t out_h, int64_t out_w) {
    const bool is_2d = img.ndim() == 2;
    const int64_t h = img.shape(0), w = img.shape(1);
    const int64_t c = is_2d ? 1 : img.shape(2);
    Tensor out(is_2d ? std::vector<int64_t>{out_h, out_w}
                     : std::vector<int64_t>{out_h, out_w, c});
    const double sy = double(h) / double(out_h), sx = double(w) / double(out_w);
    for (int64_t oy = 0; oy < out_h; ++oy) {
        const int64_t y = std::min<int64_t>(int64_t((double(oy) + 0.5) * sy), h - 1);
        for (int64_t ox = 0; ox < out_w; ++ox) {
            const int64_t x = std::min<int64_t>(int64_t((double(ox) + 0.5) * sx), w - 1);
            for (int64_t ch = 0; ch < c; ++ch)
                out[(oy * out_w + ox) * c + ch] = img[(y * w + x) * c + ch];
        }
    }
    return out;
}

Tensor flip_horizontal(const Tensor& img) {
    const bool is_2d = img.ndim() == 2;
    const int64_t h = img.shape(0), w = img.shape(1);
    const int64_t c = is_2d ? 1 : img.shape(2);
    Tensor out(img.shape());
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t ch = 0; ch < c; ++ch)
                out[(y * w + x) * c + ch] = img[(y * w + (w - 1 - x)) * c + ch];
    return out;
}

} // namespace irfs::data
