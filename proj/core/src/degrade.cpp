#include "cascadeflow/degrade.hpp"

#include "cascadeflow/resample.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cascadeflow {

NoiseSchedule NoiseSchedule::linear(std::int64_t total_steps, double variance_lo,
                                    double variance_hi) {
    if (total_steps < 2) throw std::invalid_argument("schedule needs at least 2 steps");
    if (!(variance_lo > 0.0) || !(variance_hi >= variance_lo) || variance_hi >= 1.0)
        throw std::invalid_argument("schedule variances must satisfy 0 < lo <= hi < 1");
    NoiseSchedule s;
    s.total_steps = total_steps;
    s.variance_lo = variance_lo;
    s.variance_hi = variance_hi;
    s.variance.resize(static_cast<std::size_t>(total_steps));
    s.alpha_bar.resize(static_cast<std::size_t>(total_steps));
    s.variance[0] = 0.0;  // step 0 is the identity
    for (std::int64_t i = 1; i < total_steps; ++i) {
        double u = (total_steps == 2) ? 0.0
                                      : static_cast<double>(i - 1) / static_cast<double>(total_steps - 2);
        s.variance[static_cast<std::size_t>(i)] = variance_lo + (variance_hi - variance_lo) * u;
    }
    double prod = 1.0;
    for (std::int64_t i = 0; i < total_steps; ++i) {
        prod *= 1.0 - s.variance[static_cast<std::size_t>(i)];
        s.alpha_bar[static_cast<std::size_t>(i)] = prod;
    }
    return s;
}

void NoiseSchedule::check_step(std::int64_t step) const {
    if (step < 0 || step >= total_steps)
        throw std::invalid_argument("noise step " + std::to_string(step) +
                                    " outside schedule range [0, " + std::to_string(total_steps - 1) +
                                    "]");
}

double NoiseSchedule::alpha(std::int64_t step) const {
    check_step(step);
    return std::sqrt(alpha_bar[static_cast<std::size_t>(step)]);
}

double NoiseSchedule::beta(std::int64_t step) const {
    check_step(step);
    return std::sqrt(1.0 - alpha_bar[static_cast<std::size_t>(step)]);
}

void PixelDegradeConfig::validate() const {
    if (sigma_lo < 0.0 || sigma_hi < sigma_lo)
        throw std::invalid_argument("blur sigma range invalid");
    if (factor_lo < 1.0 || factor_hi < factor_lo)
        throw std::invalid_argument("downscale factor range must satisfy 1 <= lo <= hi");
    if (second_blur_prob < 0.0 || second_blur_prob > 1.0)
        throw std::invalid_argument("second blur probability outside [0, 1]");
}

PixelDegradeConfig PixelDegradeConfig::identity() {
    PixelDegradeConfig c;
    c.sigma_lo = c.sigma_hi = 0.0;
    c.factor_lo = c.factor_hi = 1.0;
    c.second_blur_prob = 0.0;
    return c;
}

VideoTensor deg_pixel(const VideoTensor& v, const PixelDegradeConfig& cfg, Rng& rng) {
    cfg.validate();
    double sigma1 = rng.uniform(cfg.sigma_lo, cfg.sigma_hi);
    double factor = rng.uniform(cfg.factor_lo, cfg.factor_hi);
    bool second = rng.bernoulli(cfg.second_blur_prob);
    double sigma2 = second ? rng.uniform(cfg.sigma_lo, cfg.sigma_hi) : 0.0;

    VideoTensor out = gaussian_blur(v, sigma1);
    std::int64_t dh = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(
                                                    static_cast<double>(v.height) / factor)));
    std::int64_t dw = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(
                                                    static_cast<double>(v.width) / factor)));
    if (dh != v.height || dw != v.width) {
        out = resize_bicubic(out, dh, dw);
        out = resize_bicubic(out, v.height, v.width);
    }
    if (sigma2 > 0.0) out = gaussian_blur(out, sigma2);
    return clamp_video(out, -1.0, 1.0);
}

LatentTensor deg_latent(const LatentTensor& z, std::int64_t step, const NoiseSchedule& sched,
                        Rng& rng) {
    sched.check_step(step);
    if (step == 0) return z;
    double a = sched.alpha(step), b = sched.beta(step);
    LatentTensor out = z;
    for (auto& x : out.data) x = a * x + b * rng.normal();
    return out;
}

TrainPair make_train_pair(const VideoTensor& x_hr, std::int64_t cond, const StepRange& range,
                          const PixelDegradeConfig& pix_cfg, const Codec& codec,
                          const NoiseSchedule& sched, Rng& rng) {
    if (range.lo > range.hi)
        throw std::invalid_argument("noise step range lo > hi");
    sched.check_step(range.lo);
    sched.check_step(range.hi);
    TrainPair pair;
    pair.z_hr = codec.encode(x_hr);
    VideoTensor degraded = deg_pixel(x_hr, pix_cfg, rng);
    LatentTensor z = codec.encode(degraded);
    pair.noise_step = rng.uniform_int(range.lo, range.hi);
    pair.z_lr = deg_latent(z, pair.noise_step, sched, rng);
    pair.cond = cond;
    return pair;
}

}  // namespace cascadeflow
