#pragma once

#include "cascadeflow/codec.hpp"
#include "cascadeflow/degrade.hpp"
#include "cascadeflow/dit.hpp"

#include <functional>

namespace cascadeflow {

enum class Solver { euler, heun };

struct SampleConfig {
    std::int64_t steps = 4;      // ODE steps S
    double cfg_scale = 13.0;     // guidance scale s; 1 disables guidance
    std::int64_t noise_step = 675;
    Solver solver = Solver::euler;
};

using FlowField = std::function<LatentTensor(const LatentTensor&, double)>;

// Fixed-step integration from t=0 to t=1; the field is evaluated at
// t in {0, 1/S, ..., (S-1)/S}. Throws std::runtime_error if the state goes
// non-finite, reporting the step index. Heun additionally evaluates at the
// interval ends (two field calls per step).
LatentTensor integrate(const FlowField& field, LatentTensor z0, std::int64_t steps,
                       Solver solver = Solver::euler);

// Guided velocity: v_uncond + scale * (v_cond - v_uncond). Exactly one model
// evaluation when scale == 1, two otherwise. eval_counter (optional)
// accumulates model evaluations.
LatentTensor cfg_field(const DiTConfig& cfg, const ParamStore& params, RopeCache& ropes,
                       const LatentTensor& z, double t, std::int64_t noise_step,
                       std::int64_t cond, double scale, std::int64_t* eval_counter = nullptr);

struct SampleResult {
    LatentTensor latent;
    std::int64_t field_evals = 0;  // model evaluations (NFE accounting)
};

// Integrate the guided model field from z0.
SampleResult sample_flow(const DiTConfig& cfg, const ParamStore& params, RopeCache& ropes,
                         const LatentTensor& z0, const SampleConfig& sc, std::int64_t cond);

struct EnhanceResult {
    VideoTensor video;
    std::int64_t field_evals = 0;
    std::int64_t noise_step = 0;
};

// Full enhancement pass over a pixel clip already at the output grid:
// encode, mix in scheduled noise at sc.noise_step, transport to the clean
// latent in sc.steps ODE steps, decode, clamp to [-1, 1].
EnhanceResult enhance(const VideoTensor& x_in, const DiTConfig& cfg, const ParamStore& params,
                      RopeCache& ropes, const Codec& codec, const NoiseSchedule& sched,
                      const SampleConfig& sc, std::int64_t cond, Rng& rng);

}  // namespace cascadeflow
