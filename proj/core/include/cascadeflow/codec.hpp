#pragma once

#include "cascadeflow/tensor.hpp"

#include <cstdint>
#include <vector>

namespace cascadeflow {

// Invertible stand-in for a causal video autoencoder. Non-overlapping patches
// are mixed by a fixed orthonormal matrix, so encode/decode are exact
// inverses and encode preserves sum-of-squares energy.
//
// Temporal grouping is causal-style: video frame 0 maps to latent frame 0 on
// its own; every subsequent group of temporal_ratio frames maps to one more
// latent frame. Hence t = (T-1)/temporal_ratio + 1. The first (short) patch
// is zero-padded to the full patch volume so a single square mixing matrix
// covers both cases.
struct CodecConfig {
    std::int64_t spatial_ratio = 2;
    std::int64_t temporal_ratio = 2;
    std::int64_t channels = 1;  // pixel channels
    std::uint64_t seed = 0xC0DEC;

    // Latent channels: channels * spatial_ratio^2 * temporal_ratio.
    std::int64_t latent_channels() const;
    void validate() const;
};

struct LatentShape {
    std::int64_t t, h, w, c;
};

// Shape law only; works for any sizes satisfying the divisibility rules.
LatentShape latent_shape_for(const CodecConfig& cfg, std::int64_t frames, std::int64_t height,
                             std::int64_t width);

class Codec {
public:
    explicit Codec(CodecConfig cfg);

    const CodecConfig& config() const { return cfg_; }

    // Throws std::invalid_argument when (frames-1) % temporal_ratio != 0 or
    // height/width are not divisible by spatial_ratio.
    LatentTensor encode(const VideoTensor& v) const;
    VideoTensor decode(const LatentTensor& z) const;

    // The d x d orthonormal mixing matrix (d = patch volume), row-major.
    const std::vector<double>& mixing_matrix() const { return q_; }
    std::int64_t patch_volume() const { return d_; }

private:
    CodecConfig cfg_;
    std::int64_t d_ = 0;
    std::vector<double> q_;  // d x d, rows orthonormal
};

}  // namespace cascadeflow
