#pragma once

#include "cascadeflow/tensor.hpp"

namespace cascadeflow {

// Separable Catmull-Rom cubic resize of each frame to (out_h, out_w).
// Downscaling widens the kernel support by the scale factor (antialiasing).
// Resizing to the input size reproduces the input exactly.
VideoTensor resize_bicubic(const VideoTensor& v, std::int64_t out_h, std::int64_t out_w);

// Separable Gaussian blur per frame. sigma <= 0 returns the input unchanged.
// Edges use clamp-to-edge extension; kernel weights are normalized, so
// constant frames are preserved exactly.
VideoTensor gaussian_blur(const VideoTensor& v, double sigma);

// Clamp all samples into [lo, hi].
VideoTensor clamp_video(const VideoTensor& v, double lo, double hi);

}  // namespace cascadeflow
