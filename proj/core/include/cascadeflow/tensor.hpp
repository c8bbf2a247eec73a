#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cascadeflow {

// Dense row-major tensor of doubles. All model math runs in double; the
// on-disk container quantizes to little-endian f32 (see checkpoint.hpp).
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::int64_t> s, std::vector<double> d);

    static Tensor zeros(std::vector<std::int64_t> shape);
    static Tensor full(std::vector<std::int64_t> shape, double value);

    std::int64_t numel() const;
    std::int64_t rows() const;  // 2-D only
    std::int64_t cols() const;  // 2-D only
    bool same_shape(const Tensor& other) const;
    bool all_finite() const;

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }
};

std::int64_t shape_numel(const std::vector<std::int64_t>& shape);
std::string shape_str(const std::vector<std::int64_t>& shape);

// Video clip in pixel space: frames x height x width x channels, values
// nominally in [-1, 1]. Index layout is row-major (f, y, x, c).
struct VideoTensor {
    std::int64_t frames = 0, height = 0, width = 0, channels = 0;
    std::vector<double> data;

    VideoTensor() = default;
    VideoTensor(std::int64_t f, std::int64_t h, std::int64_t w, std::int64_t c);

    double& at(std::int64_t f, std::int64_t y, std::int64_t x, std::int64_t c);
    double at(std::int64_t f, std::int64_t y, std::int64_t x, std::int64_t c) const;
    std::int64_t numel() const { return frames * height * width * channels; }
    bool same_shape(const VideoTensor& o) const;
    std::string shape_str() const;
};

// Latent grid: t x h x w x c, row-major (t, h, w, c). Flattening to a token
// matrix [t*h*w, c] is layout-free.
struct LatentTensor {
    std::int64_t t = 0, h = 0, w = 0, c = 0;
    std::vector<double> data;

    LatentTensor() = default;
    LatentTensor(std::int64_t t_, std::int64_t h_, std::int64_t w_, std::int64_t c_);

    double& at(std::int64_t ti, std::int64_t hi, std::int64_t wi, std::int64_t ci);
    double at(std::int64_t ti, std::int64_t hi, std::int64_t wi, std::int64_t ci) const;
    std::int64_t tokens() const { return t * h * w; }
    std::int64_t numel() const { return t * h * w * c; }
    bool same_shape(const LatentTensor& o) const;
    std::string shape_str() const;
};

double sum_sq(const std::vector<double>& v);
bool all_finite(const std::vector<double>& v);

}  // namespace cascadeflow
