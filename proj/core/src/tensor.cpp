#include "cascadeflow/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace cascadeflow {

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<std::int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<std::int64_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
        throw std::invalid_argument("tensor data size " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
}

Tensor Tensor::zeros(std::vector<std::int64_t> shape) {
    auto n = shape_numel(shape);
    Tensor t;
    t.shape = std::move(shape);
    t.data.assign(static_cast<std::size_t>(n), 0.0);
    return t;
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double value) {
    auto n = shape_numel(shape);
    Tensor t;
    t.shape = std::move(shape);
    t.data.assign(static_cast<std::size_t>(n), value);
    return t;
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(data.size()); }

std::int64_t Tensor::rows() const {
    if (shape.size() != 2) throw std::logic_error("rows() on non-2D tensor " + shape_str(shape));
    return shape[0];
}

std::int64_t Tensor::cols() const {
    if (shape.size() != 2) throw std::logic_error("cols() on non-2D tensor " + shape_str(shape));
    return shape[1];
}

bool Tensor::same_shape(const Tensor& other) const { return shape == other.shape; }

bool Tensor::all_finite() const { return cascadeflow::all_finite(data); }

VideoTensor::VideoTensor(std::int64_t f, std::int64_t h, std::int64_t w, std::int64_t c)
    : frames(f), height(h), width(w), channels(c) {
    if (f <= 0 || h <= 0 || w <= 0 || c <= 0)
        throw std::invalid_argument("video dimensions must be positive, got " +
                                    cascadeflow::shape_str({f, h, w, c}));
    data.assign(static_cast<std::size_t>(f * h * w * c), 0.0);
}

double& VideoTensor::at(std::int64_t f, std::int64_t y, std::int64_t x, std::int64_t c) {
    return data[static_cast<std::size_t>(((f * height + y) * width + x) * channels + c)];
}

double VideoTensor::at(std::int64_t f, std::int64_t y, std::int64_t x, std::int64_t c) const {
    return data[static_cast<std::size_t>(((f * height + y) * width + x) * channels + c)];
}

bool VideoTensor::same_shape(const VideoTensor& o) const {
    return frames == o.frames && height == o.height && width == o.width && channels == o.channels;
}

std::string VideoTensor::shape_str() const {
    return cascadeflow::shape_str({frames, height, width, channels});
}

LatentTensor::LatentTensor(std::int64_t t_, std::int64_t h_, std::int64_t w_, std::int64_t c_)
    : t(t_), h(h_), w(w_), c(c_) {
    if (t <= 0 || h <= 0 || w <= 0 || c <= 0)
        throw std::invalid_argument("latent dimensions must be positive, got " + cascadeflow::shape_str({t, h, w, c}));
    data.assign(static_cast<std::size_t>(t * h * w * c), 0.0);
}

double& LatentTensor::at(std::int64_t ti, std::int64_t hi, std::int64_t wi, std::int64_t ci) {
    return data[static_cast<std::size_t>(((ti * h + hi) * w + wi) * c + ci)];
}

double LatentTensor::at(std::int64_t ti, std::int64_t hi, std::int64_t wi, std::int64_t ci) const {
    return data[static_cast<std::size_t>(((ti * h + hi) * w + wi) * c + ci)];
}

bool LatentTensor::same_shape(const LatentTensor& o) const {
    return t == o.t && h == o.h && w == o.w && c == o.c;
}

std::string LatentTensor::shape_str() const { return cascadeflow::shape_str({t, h, w, c}); }

double sum_sq(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace cascadeflow
