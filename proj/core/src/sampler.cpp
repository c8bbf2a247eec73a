#include "cascadeflow/sampler.hpp"

#include "cascadeflow/resample.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cascadeflow {

namespace {

void axpy(LatentTensor& y, double a, const LatentTensor& x) {
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += a * x.data[i];
}

void check_state(const LatentTensor& z, std::int64_t step_index) {
    if (!all_finite(z.data))
        throw std::runtime_error("sampler state went non-finite at step " +
                                 std::to_string(step_index));
}

}  // namespace

LatentTensor integrate(const FlowField& field, LatentTensor z0, std::int64_t steps,
                       Solver solver) {
    if (steps < 1) throw std::invalid_argument("integration needs at least 1 step");
    check_state(z0, -1);
    const double dt = 1.0 / static_cast<double>(steps);
    LatentTensor z = std::move(z0);
    for (std::int64_t k = 0; k < steps; ++k) {
        double t = static_cast<double>(k) * dt;
        LatentTensor v1 = field(z, t);
        if (!z.same_shape(v1))
            throw std::runtime_error("flow field changed latent shape at step " + std::to_string(k));
        if (solver == Solver::euler) {
            axpy(z, dt, v1);
        } else {
            LatentTensor z_pred = z;
            axpy(z_pred, dt, v1);
            LatentTensor v2 = field(z_pred, t + dt);
            axpy(z, 0.5 * dt, v1);
            axpy(z, 0.5 * dt, v2);
        }
        check_state(z, k);
    }
    return z;
}

LatentTensor cfg_field(const DiTConfig& cfg, const ParamStore& params, RopeCache& ropes,
                       const LatentTensor& z, double t, std::int64_t noise_step,
                       std::int64_t cond, double scale, std::int64_t* eval_counter) {
    if (scale == 1.0 || cond == kNullCond) {
        if (eval_counter) *eval_counter += 1;
        return dit_forward(cfg, params, ropes, z, t, noise_step, cond);
    }
    LatentTensor vu = dit_forward(cfg, params, ropes, z, t, noise_step, kNullCond);
    LatentTensor vc = dit_forward(cfg, params, ropes, z, t, noise_step, cond);
    if (eval_counter) *eval_counter += 2;
    for (std::size_t i = 0; i < vu.data.size(); ++i)
        vu.data[i] = vu.data[i] + scale * (vc.data[i] - vu.data[i]);
    return vu;
}

SampleResult sample_flow(const DiTConfig& cfg, const ParamStore& params, RopeCache& ropes,
                         const LatentTensor& z0, const SampleConfig& sc, std::int64_t cond) {
    SampleResult r;
    r.field_evals = 0;
    FlowField f = [&](const LatentTensor& z, double t) {
        return cfg_field(cfg, params, ropes, z, t, sc.noise_step, cond, sc.cfg_scale,
                         &r.field_evals);
    };
    r.latent = integrate(f, z0, sc.steps, sc.solver);
    return r;
}

EnhanceResult enhance(const VideoTensor& x_in, const DiTConfig& cfg, const ParamStore& params,
                      RopeCache& ropes, const Codec& codec, const NoiseSchedule& sched,
                      const SampleConfig& sc, std::int64_t cond, Rng& rng) {
    LatentTensor z = codec.encode(x_in);
    z = deg_latent(z, sc.noise_step, sched, rng);
    SampleResult s = sample_flow(cfg, params, ropes, z, sc, cond);
    EnhanceResult out;
    out.video = clamp_video(codec.decode(s.latent), -1.0, 1.0);
    out.field_evals = s.field_evals;
    out.noise_step = sc.noise_step;
    return out;
}

}  // namespace cascadeflow
