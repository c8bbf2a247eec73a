#pragma once

#include "cascadeflow/codec.hpp"
#include "cascadeflow/rng.hpp"
#include "cascadeflow/tensor.hpp"

#include <cstdint>
#include <vector>

namespace cascadeflow {

// Step-indexed noise schedule. variance[0] is exactly 0 (step 0 is the
// identity: alpha_0 = 1, beta_0 = 0); the remaining 999 entries ramp
// linearly from variance_lo to variance_hi. alpha_bar is the cumulative
// product of (1 - variance), and the mixing coefficients satisfy
// alpha_s^2 + beta_s^2 = 1 at every step.
struct NoiseSchedule {
    std::int64_t total_steps = 1000;
    double variance_lo = 1e-4;
    double variance_hi = 2e-2;
    std::vector<double> variance;   // per-step variance, [total_steps]
    std::vector<double> alpha_bar;  // cumulative signal fraction, [total_steps]

    static NoiseSchedule linear(std::int64_t total_steps = 1000, double variance_lo = 1e-4,
                                double variance_hi = 2e-2);

    double alpha(std::int64_t step) const;  // sqrt(alpha_bar[step])
    double beta(std::int64_t step) const;   // sqrt(1 - alpha_bar[step])
    void check_step(std::int64_t step) const;
};

// Pixel-space degradation: blur -> downscale by a random factor -> upscale
// back -> optional second blur -> clamp to [-1, 1]. Frame count and frame
// size are unchanged; only spatial detail is destroyed.
struct PixelDegradeConfig {
    double sigma_lo = 0.2;
    double sigma_hi = 2.0;
    double factor_lo = 2.0;
    double factor_hi = 4.0;
    double second_blur_prob = 0.5;

    void validate() const;
    // Parameters that make the operator the identity (for tests/presets).
    static PixelDegradeConfig identity();
};

VideoTensor deg_pixel(const VideoTensor& v, const PixelDegradeConfig& cfg, Rng& rng);

// Latent-space degradation: z_out = alpha_step * z + beta_step * n with
// n ~ N(0, I). Step 0 returns z exactly (no rng draws).
LatentTensor deg_latent(const LatentTensor& z, std::int64_t step, const NoiseSchedule& sched,
                        Rng& rng);

// One training pair for the enhancement stage.
struct TrainPair {
    LatentTensor z_lr;       // degraded source latent
    LatentTensor z_hr;       // clean target latent
    std::int64_t cond = -1;  // condition class; -1 = null condition
    std::int64_t noise_step = 0;
};

struct StepRange {
    std::int64_t lo = 600;
    std::int64_t hi = 900;  // inclusive
};

// Builds the pair the enhancement stage trains on: encode the clean clip,
// degrade a copy in pixel space, encode that, then add scheduled latent
// noise at a step drawn uniformly from [range.lo, range.hi].
TrainPair make_train_pair(const VideoTensor& x_hr, std::int64_t cond, const StepRange& range,
                          const PixelDegradeConfig& pix_cfg, const Codec& codec,
                          const NoiseSchedule& sched, Rng& rng);

}  // namespace cascadeflow
