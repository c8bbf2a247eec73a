#include "cascadeflow/resample.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace cascadeflow {

namespace {

// Catmull-Rom kernel (cubic, a = -0.5), support [-2, 2].
double cubic_kernel(double x) {
    constexpr double a = -0.5;
    x = std::fabs(x);
    if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return a * (((x - 5.0) * x + 8.0) * x - 4.0);
    return 0.0;
}

struct TapSet {
    // For each output index: first source index and normalized weights.
    std::vector<std::int64_t> first;
    std::vector<double> weights;  // out_n * taps, row-major
    std::int64_t taps = 0;
};

TapSet make_taps(std::int64_t in_n, std::int64_t out_n) {
    // Standard half-pixel-center mapping; kernel stretched when minifying.
    double scale = static_cast<double>(in_n) / static_cast<double>(out_n);
    double filter_scale = std::max(1.0, scale);
    double support = 2.0 * filter_scale;
    TapSet ts;
    ts.taps = static_cast<std::int64_t>(std::ceil(support)) * 2 + 1;
    ts.first.resize(static_cast<std::size_t>(out_n));
    ts.weights.assign(static_cast<std::size_t>(out_n * ts.taps), 0.0);
    for (std::int64_t o = 0; o < out_n; ++o) {
        double center = (static_cast<double>(o) + 0.5) * scale - 0.5;
        std::int64_t lo = static_cast<std::int64_t>(std::floor(center - support)) + 1;
        ts.first[static_cast<std::size_t>(o)] = lo;
        double wsum = 0.0;
        for (std::int64_t k = 0; k < ts.taps; ++k) {
            double w = cubic_kernel((center - static_cast<double>(lo + k)) / filter_scale);
            ts.weights[static_cast<std::size_t>(o * ts.taps + k)] = w;
            wsum += w;
        }
        if (wsum == 0.0) throw std::logic_error("resampler produced an empty tap set");
        for (std::int64_t k = 0; k < ts.taps; ++k)
            ts.weights[static_cast<std::size_t>(o * ts.taps + k)] /= wsum;
    }
    return ts;
}

inline std::int64_t clamp_idx(std::int64_t i, std::int64_t n) {
    return std::min(std::max<std::int64_t>(i, 0), n - 1);
}

// Resize the second-to-innermost axis of a [rows, n, chans] block.
void resize_axis(const double* src, double* dst, std::int64_t rows, std::int64_t in_n,
                 std::int64_t out_n, std::int64_t chans, const TapSet& ts) {
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* srow = src + r * in_n * chans;
        double* drow = dst + r * out_n * chans;
        for (std::int64_t o = 0; o < out_n; ++o) {
            const double* w = &ts.weights[static_cast<std::size_t>(o * ts.taps)];
            std::int64_t lo = ts.first[static_cast<std::size_t>(o)];
            for (std::int64_t c = 0; c < chans; ++c) {
                double acc = 0.0;
                for (std::int64_t k = 0; k < ts.taps; ++k) {
                    std::int64_t si = clamp_idx(lo + k, in_n);
                    acc += w[k] * srow[si * chans + c];
                }
                drow[o * chans + c] = acc;
            }
        }
    }
}

}  // namespace

VideoTensor resize_bicubic(const VideoTensor& v, std::int64_t out_h, std::int64_t out_w) {
    if (out_h <= 0 || out_w <= 0)
        throw std::invalid_argument("resize target must be positive, got " +
                                    shape_str({out_h, out_w}));
    if (out_h == v.height && out_w == v.width) {
        // Identity mapping: centers land exactly on source samples and the
        // normalized Catmull-Rom taps reduce to a delta, so skip the pass.
        return v;
    }
    // Pass 1: width. Treat data as [frames*height, width, channels].
    VideoTensor mid(v.frames, v.height, out_w, v.channels);
    TapSet tw = make_taps(v.width, out_w);
    resize_axis(v.data.data(), mid.data.data(), v.frames * v.height, v.width, out_w, v.channels, tw);
    if (out_h == v.height) return mid;
    // Pass 2: height. Gather whole rows of length out_w*channels per tap.
    VideoTensor out(v.frames, out_h, out_w, v.channels);
    TapSet th = make_taps(v.height, out_h);
    std::int64_t rowlen = out_w * v.channels;
    for (std::int64_t f = 0; f < v.frames; ++f) {
        const double* sframe = mid.data.data() + f * v.height * rowlen;
        double* dframe = out.data.data() + f * out_h * rowlen;
        for (std::int64_t o = 0; o < out_h; ++o) {
            const double* w = &th.weights[static_cast<std::size_t>(o * th.taps)];
            std::int64_t lo = th.first[static_cast<std::size_t>(o)];
            double* drow = dframe + o * rowlen;
            for (std::int64_t x = 0; x < rowlen; ++x) drow[x] = 0.0;
            for (std::int64_t k = 0; k < th.taps; ++k) {
                std::int64_t si = clamp_idx(lo + k, v.height);
                const double* srow = sframe + si * rowlen;
                double wk = w[k];
                if (wk == 0.0) continue;
                for (std::int64_t x = 0; x < rowlen; ++x) drow[x] += wk * srow[x];
            }
        }
    }
    return out;
}

VideoTensor gaussian_blur(const VideoTensor& v, double sigma) {
    if (sigma <= 0.0) return v;
    std::int64_t radius = static_cast<std::int64_t>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (std::int64_t i = -radius; i <= radius; ++i) {
        double w = std::exp(-0.5 * (static_cast<double>(i) / sigma) * (static_cast<double>(i) / sigma));
        kernel[static_cast<std::size_t>(i + radius)] = w;
        sum += w;
    }
    for (auto& w : kernel) w /= sum;

    VideoTensor mid(v.frames, v.height, v.width, v.channels);
    // Horizontal pass.
    for (std::int64_t f = 0; f < v.frames; ++f)
        for (std::int64_t y = 0; y < v.height; ++y)
            for (std::int64_t x = 0; x < v.width; ++x)
                for (std::int64_t c = 0; c < v.channels; ++c) {
                    double acc = 0.0;
                    for (std::int64_t k = -radius; k <= radius; ++k)
                        acc += kernel[static_cast<std::size_t>(k + radius)] *
                               v.at(f, y, clamp_idx(x + k, v.width), c);
                    mid.at(f, y, x, c) = acc;
                }
    // Vertical pass.
    VideoTensor out(v.frames, v.height, v.width, v.channels);
    for (std::int64_t f = 0; f < v.frames; ++f)
        for (std::int64_t y = 0; y < v.height; ++y)
            for (std::int64_t x = 0; x < v.width; ++x)
                for (std::int64_t c = 0; c < v.channels; ++c) {
                    double acc = 0.0;
                    for (std::int64_t k = -radius; k <= radius; ++k)
                        acc += kernel[static_cast<std::size_t>(k + radius)] *
                               mid.at(f, clamp_idx(y + k, v.height), x, c);
                    out.at(f, y, x, c) = acc;
                }
    return out;
}

VideoTensor clamp_video(const VideoTensor& v, double lo, double hi) {
    VideoTensor out = v;
    for (auto& x : out.data) x = std::min(std::max(x, lo), hi);
    return out;
}

}  // namespace cascadeflow
