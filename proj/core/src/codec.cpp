#include "cascadeflow/codec.hpp"

#include "cascadeflow/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cascadeflow {

std::int64_t CodecConfig::latent_channels() const {
    return channels * spatial_ratio * spatial_ratio * temporal_ratio;
}

void CodecConfig::validate() const {
    if (spatial_ratio < 1 || temporal_ratio < 1 || channels < 1)
        throw std::invalid_argument("codec ratios and channels must be >= 1");
}

LatentShape latent_shape_for(const CodecConfig& cfg, std::int64_t frames, std::int64_t height,
                             std::int64_t width) {
    cfg.validate();
    if (frames < 1 || (frames - 1) % cfg.temporal_ratio != 0)
        throw std::invalid_argument(
            "frame count " + std::to_string(frames) + " incompatible with temporal ratio " +
            std::to_string(cfg.temporal_ratio) + " (need (frames-1) divisible by it)");
    if (height % cfg.spatial_ratio != 0 || width % cfg.spatial_ratio != 0)
        throw std::invalid_argument("frame size " + shape_str({height, width}) +
                                    " not divisible by spatial ratio " +
                                    std::to_string(cfg.spatial_ratio));
    return LatentShape{(frames - 1) / cfg.temporal_ratio + 1, height / cfg.spatial_ratio,
                       width / cfg.spatial_ratio, cfg.latent_channels()};
}

namespace {

// Seeded Gaussian matrix orthonormalized with modified Gram-Schmidt.
std::vector<double> make_orthonormal(std::int64_t d, std::uint64_t seed) {
    Rng rng(mix64(seed ^ 0x0123456789ABCDEFull));
    std::vector<double> q(static_cast<std::size_t>(d * d));
    for (auto& x : q) x = rng.normal();
    for (std::int64_t i = 0; i < d; ++i) {
        double* ri = &q[static_cast<std::size_t>(i * d)];
        for (std::int64_t j = 0; j < i; ++j) {
            const double* rj = &q[static_cast<std::size_t>(j * d)];
            double dot = 0.0;
            for (std::int64_t k = 0; k < d; ++k) dot += ri[k] * rj[k];
            for (std::int64_t k = 0; k < d; ++k) ri[k] -= dot * rj[k];
        }
        double nrm = 0.0;
        for (std::int64_t k = 0; k < d; ++k) nrm += ri[k] * ri[k];
        nrm = std::sqrt(nrm);
        if (nrm < 1e-8)
            throw std::runtime_error("degenerate random matrix during orthonormalization");
        for (std::int64_t k = 0; k < d; ++k) ri[k] /= nrm;
    }
    return q;
}

}  // namespace

Codec::Codec(CodecConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    d_ = cfg_.latent_channels();
    q_ = make_orthonormal(d_, cfg_.seed);
}

LatentTensor Codec::encode(const VideoTensor& v) const {
    if (v.channels != cfg_.channels)
        throw std::invalid_argument("video has " + std::to_string(v.channels) +
                                    " channels, codec configured for " +
                                    std::to_string(cfg_.channels));
    LatentShape ls = latent_shape_for(cfg_, v.frames, v.height, v.width);
    LatentTensor z(ls.t, ls.h, ls.w, ls.c);
    const std::int64_t s = cfg_.spatial_ratio, r = cfg_.temporal_ratio, ch = cfg_.channels;
    std::vector<double> patch(static_cast<std::size_t>(d_));
    for (std::int64_t ti = 0; ti < ls.t; ++ti) {
        // Latent frame 0 covers video frame 0 only; latent frame ti >= 1
        // covers frames [1 + (ti-1)*r, 1 + ti*r).
        std::int64_t f0 = (ti == 0) ? 0 : 1 + (ti - 1) * r;
        std::int64_t nf = (ti == 0) ? 1 : r;
        for (std::int64_t hi = 0; hi < ls.h; ++hi)
            for (std::int64_t wi = 0; wi < ls.w; ++wi) {
                std::size_t idx = 0;
                for (std::int64_t f = 0; f < nf; ++f)
                    for (std::int64_t y = 0; y < s; ++y)
                        for (std::int64_t x = 0; x < s; ++x)
                            for (std::int64_t c = 0; c < ch; ++c)
                                patch[idx++] = v.at(f0 + f, hi * s + y, wi * s + x, c);
                for (; idx < static_cast<std::size_t>(d_); ++idx) patch[idx] = 0.0;
                double* zout = &z.data[static_cast<std::size_t>(((ti * ls.h + hi) * ls.w + wi) * d_)];
                for (std::int64_t row = 0; row < d_; ++row) {
                    const double* qr = &q_[static_cast<std::size_t>(row * d_)];
                    double acc = 0.0;
                    for (std::int64_t k = 0; k < d_; ++k) acc += qr[k] * patch[k];
                    zout[row] = acc;
                }
            }
    }
    return z;
}

VideoTensor Codec::decode(const LatentTensor& z) const {
    if (z.c != d_)
        throw std::invalid_argument("latent has " + std::to_string(z.c) +
                                    " channels, codec expects " + std::to_string(d_));
    const std::int64_t s = cfg_.spatial_ratio, r = cfg_.temporal_ratio, ch = cfg_.channels;
    std::int64_t frames = (z.t - 1) * r + 1;
    VideoTensor v(frames, z.h * s, z.w * s, ch);
    std::vector<double> patch(static_cast<std::size_t>(d_));
    for (std::int64_t ti = 0; ti < z.t; ++ti) {
        std::int64_t f0 = (ti == 0) ? 0 : 1 + (ti - 1) * r;
        std::int64_t nf = (ti == 0) ? 1 : r;
        for (std::int64_t hi = 0; hi < z.h; ++hi)
            for (std::int64_t wi = 0; wi < z.w; ++wi) {
                const double* zin = &z.data[static_cast<std::size_t>(((ti * z.h + hi) * z.w + wi) * d_)];
                // q_ is orthonormal, so the inverse is the transpose.
                for (std::int64_t k = 0; k < d_; ++k) {
                    double acc = 0.0;
                    for (std::int64_t row = 0; row < d_; ++row)
                        acc += q_[static_cast<std::size_t>(row * d_ + k)] * zin[row];
                    patch[static_cast<std::size_t>(k)] = acc;
                }
                std::size_t idx = 0;
                for (std::int64_t f = 0; f < nf; ++f)
                    for (std::int64_t y = 0; y < s; ++y)
                        for (std::int64_t x = 0; x < s; ++x)
                            for (std::int64_t c = 0; c < ch; ++c)
                                v.at(f0 + f, hi * s + y, wi * s + x, c) = patch[idx++];
            }
    }
    return v;
}

}  // namespace cascadeflow
